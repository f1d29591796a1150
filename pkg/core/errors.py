"""
GnarLab — Fehlertypen
Alle Fehler sind zugleich ValueError, damit Aufrufer wie gewohnt abfangen können.
"""


class GnarError(ValueError):
    """Basisklasse für alle GnarLab-Fehler."""


class NetworkError(GnarError):
    """Ungültige Adjazenz, Knoten ohne Out-Degree, kaputte Edge-Liste."""


class NonStationaryError(GnarError):
    """Parameter verletzen die Stationaritätsbedingung."""


class EmptyGroupError(GnarError):
    """Eine Gruppe hat keine Mitglieder (leerer Design-Block)."""


class FitError(GnarError):
    """Kein Restart hat einen endlichen Loss geliefert."""


class SelectionError(GnarError):
    """GIC nicht auswertbar (z.B. Loss = 0)."""


class InferenceError(GnarError):
    """Kovarianz oder Varianzschätzung nicht berechenbar."""
