"""
GnarLab — Database Models (SQLAlchemy)
Run-Registry für Simulationskampagnen: eine Zeile pro Kampagne, eine pro Replikation.
Die CSV-Dateien bleiben das deterministische Ergebnis; die Registry trägt Zeitstempel.
"""
import uuid
from datetime import datetime, timezone

from sqlalchemy import (
    JSON, Boolean, Column, DateTime, Float, ForeignKey, Integer, String, Text, create_engine,
)
from sqlalchemy.orm import declarative_base, relationship, sessionmaker

Base = declarative_base()


def init_db(url: str):
    """Engine + Session-Factory, legt fehlende Tabellen an."""
    engine = create_engine(url, future=True)
    Base.metadata.create_all(engine)
    return sessionmaker(bind=engine, expire_on_commit=False)


def new_id():
    return str(uuid.uuid4())


def utcnow():
    return datetime.now(timezone.utc)


# ─── CAMPAIGN ──────────────────────────────────────────

class Campaign(Base):
    __tablename__ = "campaigns"

    id = Column(String(36), primary_key=True, default=new_id)
    name = Column(String(200), nullable=False)
    scenario = Column(Integer, nullable=False)
    network = Column(String(20), nullable=False)   # sbm|powerlaw
    n_nodes = Column(Integer, nullable=False)
    n_periods = Column(Integer, nullable=False)
    g0 = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False)
    config = Column(JSON)                          # aufgelöste Konfiguration
    out_dir = Column(Text)

    replications = Column(Integer, default=0)
    failures = Column(Integer, default=0)
    finished = Column(Boolean, default=False)

    started_at = Column(DateTime, default=utcnow)
    finished_at = Column(DateTime)

    records = relationship("ReplicationRecord", back_populates="campaign", cascade="all, delete-orphan")

    def to_dict(self):
        return {
            "id": self.id,
            "name": self.name,
            "scenario": self.scenario,
            "network": self.network,
            "N": self.n_nodes,
            "T": self.n_periods,
            "G0": self.g0,
            "seed": self.seed,
            "replications": self.replications,
            "failures": self.failures,
            "finished": self.finished,
            "started_at": self.started_at.isoformat() if self.started_at else None,
            "finished_at": self.finished_at.isoformat() if self.finished_at else None,
        }


# ─── REPLICATION ───────────────────────────────────────

class ReplicationRecord(Base):
    __tablename__ = "replications"

    id = Column(String(36), primary_key=True, default=new_id)
    campaign_id = Column(String(36), ForeignKey("campaigns.id"), nullable=False)
    replication = Column(Integer, nullable=False)     # b, 1-basiert
    n_groups = Column(Integer, nullable=False)        # G des Fits
    estimator = Column(String(20), default="gnar")    # gnar|oracle

    rho_hat = Column(Float)
    rmse_beta = Column(Float)
    rmse_nu = Column(Float)
    rmse_zeta = Column(Float)
    rmse_beta_all = Column(Float)
    rmse_nu_all = Column(Float)
    rmse_zeta_all = Column(Float)
    g_hat = Column(Integer)

    status = Column(String(20), default="ok")        # ok|failed
    error = Column(Text)
    created_at = Column(DateTime, default=utcnow)

    campaign = relationship("Campaign", back_populates="records")
