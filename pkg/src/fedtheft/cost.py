"""Communication-cost accounting for federated vs. centralized training."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction

U64_MAX = (1 << 64) - 1


def _check_u64(value: int, what: str) -> int:
    if value > U64_MAX:
        raise OverflowError(f"{what} = {value} exceeds the 64-bit unsigned range")
    return value


def _positive(**kwargs) -> None:
    for name, v in kwargs.items():
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v!r}")


def fl_cost(rounds: int, clients: int, params: int, bytes_per_param: int) -> int:
    """Bytes moved by federated training: one upload and one download per client per round."""
    _positive(rounds=rounds, clients=clients, params=params, bytes_per_param=bytes_per_param)
    return _check_u64(2 * rounds * clients * params * bytes_per_param, "fl_cost")


def centralized_cost(shard_sizes, d: int, bytes_per_param: int) -> int:
    """Bytes moved if every client uploaded its raw rows once."""
    sizes = [int(s) for s in shard_sizes]
    if not sizes:
        raise ValueError("shard_sizes must be nonempty")
    if any(s < 0 for s in sizes):
        raise ValueError("shard sizes must be nonnegative")
    _positive(d=d, bytes_per_param=bytes_per_param)
    return _check_u64(sum(sizes) * d * bytes_per_param, "centralized_cost")


def bandwidth_reduction(fl_bytes: int, centralized_bytes: int) -> float:
    """1 - fl/centralized, evaluated exactly and rounded once to float64.

    Negative whenever federation moves more bytes than the raw data; never clamped.
    """
    if centralized_bytes <= 0:
        raise ZeroDivisionError("centralized cost must be positive")
    return float(1 - Fraction(int(fl_bytes), int(centralized_bytes)))


@dataclass(frozen=True)
class CostReport:
    fl_bytes: int
    centralized_bytes: int
    bandwidth_reduction: float
    params: int
    rounds: int
    clients: int
    bytes_per_param: int

    def to_dict(self) -> dict:
        out = asdict(self)
        out["fl_mb"] = self.fl_bytes / 1e6
        out["fl_mib"] = self.fl_bytes / 2**20
        out["centralized_mb"] = self.centralized_bytes / 1e6
        out["centralized_mib"] = self.centralized_bytes / 2**20
        return out


def cost_report(rounds: int, clients: int, params: int, shard_sizes, d: int, bytes_per_param: int = 4) -> CostReport:
    fl = fl_cost(rounds, clients, params, bytes_per_param)
    central = centralized_cost(shard_sizes, d, bytes_per_param)
    return CostReport(
        fl_bytes=fl,
        centralized_bytes=central,
        bandwidth_reduction=bandwidth_reduction(fl, central),
        params=params,
        rounds=rounds,
        clients=clients,
        bytes_per_param=bytes_per_param,
    )


def format_report(report: CostReport) -> str:
    d = report.to_dict()
    lines = [
        f"rounds               {report.rounds}",
        f"clients              {report.clients}",
        f"params               {report.params}",
        f"bytes_per_param      {report.bytes_per_param}",
        f"fl_bytes             {report.fl_bytes}  ({d['fl_mb']:.2f} MB, {d['fl_mib']:.2f} MiB)",
        f"centralized_bytes    {report.centralized_bytes}  "
        f"({d['centralized_mb']:.2f} MB, {d['centralized_mib']:.2f} MiB)",
        f"bandwidth_reduction  {report.bandwidth_reduction:.6f}",
    ]
    return "\n".join(lines)
