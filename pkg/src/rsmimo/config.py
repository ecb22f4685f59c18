"""System configuration for the MIMO broadcast channel under imperfect CSIT.

Transmit power is noise-normalized (linear scale), so SNR in dB maps to
``Pt = 10**(snr_db/10)`` when ``sigma_n2 == 1``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

# Exact transmitter channel knowledge. Kept distinct from alpha = 1: alpha = 1
# is only "perfect from a DoF perspective", the error power Pt**-1 is nonzero.
PERFECT = "perfect"


def is_perfect(alpha) -> bool:
    return isinstance(alpha, str) and alpha == PERFECT


@dataclass(frozen=True)
class SystemConfig:
    """Antenna/user/stream geometry plus power, CSIT quality and sampling."""

    M: int                          # transmit antennas
    Q: int                          # receive antennas per user
    K: int                          # users
    Qc: int                         # common streams, 0 disables rate splitting
    Qk: tuple[int, ...]             # private streams per user
    Pt: float                       # total transmit power, linear, noise-normalized
    alpha: float | str              # CSIT quality exponent in [0,1], or PERFECT
    sigma_k2: tuple[float, ...]     # per-user channel variance
    sigma_n2: float = 1.0           # noise variance
    N: int = 1000                   # conditional channel samples per estimate
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "Qk", tuple(int(q) for q in self.Qk))
        object.__setattr__(self, "sigma_k2", tuple(float(s) for s in self.sigma_k2))
        qmax = min(self.M, self.Q)
        if self.M < 1 or self.Q < 1 or self.K < 1:
            raise ValueError("M, Q, K must be positive")
        if not 0 <= self.Qc <= qmax:
            raise ValueError(f"Qc must lie in [0, min(M,Q)] = [0, {qmax}]")
        if len(self.Qk) != self.K:
            raise ValueError("Qk must list one stream count per user")
        if any(q < 0 or q > qmax for q in self.Qk):
            raise ValueError(f"each Qk must lie in [0, min(M,Q)] = [0, {qmax}]")
        if all(q > 0 for q in self.Qk) and sum(self.Qk) != self.Qp:
            raise ValueError(
                f"sum(Qk) = {sum(self.Qk)} must equal min(M, K*Q) = {self.Qp} "
                "when every user is served"
            )
        if len(self.sigma_k2) != self.K:
            raise ValueError("sigma_k2 must list one variance per user")
        if any(s < 0 for s in self.sigma_k2):
            raise ValueError("channel variances must be nonnegative")
        if not self.Pt > 0:
            raise ValueError("Pt must be positive")
        if not self.sigma_n2 > 0:
            raise ValueError("sigma_n2 must be positive")
        if not is_perfect(self.alpha):
            a = float(self.alpha)
            if not 0.0 <= a <= 1.0:
                raise ValueError("alpha must lie in [0, 1] or be PERFECT")
            object.__setattr__(self, "alpha", a)
            if self.N < 1:
                raise ValueError("N must be >= 1 under imperfect CSIT")

    @property
    def Qp(self) -> int:
        """Total private streams when all users are served."""
        return min(self.M, self.K * self.Q)

    @property
    def perfect_csit(self) -> bool:
        return is_perfect(self.alpha)

    def error_powers(self):
        """Per-user CSIT error power sigma_e,k^2 = sigma_k^2 * Pt^-alpha."""
        if self.perfect_csit:
            return tuple(0.0 for _ in range(self.K))
        return tuple(s * self.Pt ** (-self.alpha) for s in self.sigma_k2)

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.Pt / self.sigma_n2)

    def replace(self, **kwargs) -> "SystemConfig":
        return dataclasses.replace(self, **kwargs)


def default_private_split(M: int, Q: int, K: int) -> tuple[int, ...]:
    """Fill users with min(M,Q) streams each until min(M, K*Q) are assigned."""
    qmax = min(M, Q)
    budget = min(M, K * Q)
    out = []
    for _ in range(K):
        q = min(qmax, budget)
        out.append(q)
        budget -= q
    return tuple(out)


# Config files are flat "key = value" text.  Lists are comma-separated,
# alpha accepts a float or the word "perfect", '#' starts a comment.
_LIST_KEYS = {"qk", "sigma_k2"}
_INT_KEYS = {"m", "q", "k", "qc", "n", "seed"}
_FLOAT_KEYS = {"pt", "sigma_n2"}
_KEY_TO_FIELD = {
    "m": "M", "q": "Q", "k": "K", "qc": "Qc", "qk": "Qk", "pt": "Pt",
    "alpha": "alpha", "sigma_k2": "sigma_k2", "sigma_n2": "sigma_n2",
    "n": "N", "samples": "N", "seed": "seed",
}


def parse_config_text(text: str) -> dict:
    """Parse the key/value config format into SystemConfig field values."""
    fields: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key not in _KEY_TO_FIELD:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if key in _LIST_KEYS:
            parsed = tuple(float(v) for v in value.split(","))
            if key == "qk":
                parsed = tuple(int(v) for v in parsed)
        elif key in _INT_KEYS:
            parsed = int(value)
        elif key in _FLOAT_KEYS:
            parsed = float(value)
        else:  # alpha
            parsed = PERFECT if value.lower() == PERFECT else float(value)
        fields[_KEY_TO_FIELD[key]] = parsed
    return fields


def load_config(path: str | Path, **overrides) -> SystemConfig:
    """Load a SystemConfig from a key/value file, with keyword overrides."""
    fields = parse_config_text(Path(path).read_text())
    fields.update({k: v for k, v in overrides.items() if v is not None})
    missing = {"M", "Q", "K", "Qc", "Qk", "Pt", "alpha", "sigma_k2"} - fields.keys()
    if missing:
        raise ValueError(f"config is missing required keys: {sorted(missing)}")
    return SystemConfig(**fields)
