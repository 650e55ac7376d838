from pydantic import BaseModel
from functools import lru_cache
import math
import os
from dotenv import load_dotenv

load_dotenv()

class Settings(BaseModel):
    # Truncation
    tail_tolerance: float = float(os.getenv("QILLUM_TAIL_TOLERANCE", "1e-10"))
    max_dense_dim: int = int(os.getenv("QILLUM_MAX_DENSE_DIM", "4000"))

    # QFI
    eigen_cut_relative: float = float(os.getenv("QILLUM_EIGEN_CUT_RELATIVE", "1e-12"))
    default_varphi: float = float(os.getenv("QILLUM_DEFAULT_VARPHI", str(math.pi / 2)))

    # Finite differences
    fd_step: float = float(os.getenv("QILLUM_FD_STEP", "1e-4"))
    richardson_tolerance: float = float(os.getenv("QILLUM_RICHARDSON_TOLERANCE", "1e-5"))

    # Optimizer
    optimizer_restarts: int = int(os.getenv("QILLUM_OPTIMIZER_RESTARTS", "16"))
    optimizer_tol: float = float(os.getenv("QILLUM_OPTIMIZER_TOL", "1e-10"))

    # Runtime
    jobs: int = int(os.getenv("QILLUM_JOBS", "1"))
    log_level: str = os.getenv("QILLUM_LOG_LEVEL", "INFO")
    schema_version: str = "1"

@lru_cache
def get_settings() -> Settings:
    return Settings()
