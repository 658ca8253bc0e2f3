"""Hardware descriptions: devices, links, platforms, and the preset machines
the simulator ships with.

Capacities are bytes (binary GB), bandwidths bytes/second (decimal), compute
flops/second, latencies seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ConfigError

GIB = 2**30

DEVICE_CPU = "CpuSocket"
DEVICE_GPU = "Gpu"

LINK_GPU_P2P = "GpuP2P"
LINK_HOST_STAGING = "HostStaging"
LINK_NETWORK = "Network"

PLATFORM_PRESET_NAMES = ("CPU", "BigBasin16", "BigBasin32", "ZionPrototype")

# Aggregate scopes.
HOST_MEM = "host_mem"
GPU_MEM = "gpu_mem"
HOST_BW = "host_bw"
GPU_BW = "gpu_bw"
CPU_FLOPS = "cpu_flops"
GPU_FLOPS = "gpu_flops"
_SCOPES = (HOST_MEM, GPU_MEM, HOST_BW, GPU_BW, CPU_FLOPS, GPU_FLOPS)


@dataclass(frozen=True)
class DeviceSpec:
    kind: str
    mem_capacity: int
    mem_bandwidth: float
    compute: float
    per_op_overhead: float = 0.0
    per_lookup_overhead: float = 0.0

    def __post_init__(self):
        if self.kind not in (DEVICE_CPU, DEVICE_GPU):
            raise ConfigError(f"unknown device kind {self.kind!r}")
        if self.mem_capacity <= 0:
            raise ConfigError("mem_capacity must be positive")
        if not self.mem_bandwidth > 0:
            raise ConfigError("mem_bandwidth must be positive")
        if not self.compute > 0:
            raise ConfigError("compute must be positive")
        if self.per_op_overhead < 0 or self.per_lookup_overhead < 0:
            raise ConfigError("overheads must be non-negative")


@dataclass(frozen=True)
class LinkSpec:
    bandwidth: float
    latency: float
    kind: str

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ConfigError("link bandwidth must be positive")
        if self.latency < 0:
            raise ConfigError("link latency must be non-negative")
        if self.kind not in (LINK_GPU_P2P, LINK_HOST_STAGING, LINK_NETWORK):
            raise ConfigError(f"unknown link kind {self.kind!r}")


@dataclass(frozen=True)
class PlatformSpec:
    name: str
    cpu_sockets: tuple[DeviceSpec, ...]
    gpus: tuple[DeviceSpec, ...]
    intra_gpu_link: LinkSpec
    host_device_link: LinkSpec
    nic: LinkSpec
    power_units: float | None
    cores_per_socket: int = 20

    def __post_init__(self):
        if not self.cpu_sockets:
            raise ConfigError("a platform needs at least one CPU socket")
        for d in self.cpu_sockets:
            if d.kind != DEVICE_CPU:
                raise ConfigError("cpu_sockets must contain CpuSocket devices")
        for d in self.gpus:
            if d.kind != DEVICE_GPU:
                raise ConfigError("gpus must contain Gpu devices")
        if self.power_units is not None and not self.power_units > 0:
            raise ConfigError("power_units must be positive when set")
        if self.cores_per_socket < 1:
            raise ConfigError("cores_per_socket must be >= 1")

    @property
    def total_cores(self) -> int:
        return self.cores_per_socket * len(self.cpu_sockets)


def aggregate(platform: PlatformSpec, scope: str) -> float:
    """Sum one capacity/rate scope across the platform's devices."""
    if scope == HOST_MEM:
        return float(sum(d.mem_capacity for d in platform.cpu_sockets))
    if scope == GPU_MEM:
        return float(sum(d.mem_capacity for d in platform.gpus))
    if scope == HOST_BW:
        return float(sum(d.mem_bandwidth for d in platform.cpu_sockets))
    if scope == GPU_BW:
        return float(sum(d.mem_bandwidth for d in platform.gpus))
    if scope == CPU_FLOPS:
        return float(sum(d.compute for d in platform.cpu_sockets))
    if scope == GPU_FLOPS:
        return float(sum(d.compute for d in platform.gpus))
    raise ConfigError(f"unknown aggregate scope {scope!r}; available: {', '.join(_SCOPES)}")


# ---------------------------------------------------------------------------
# device references used by placement plans

HOST_DEVICE = "host"


def gpu_device(index: int) -> str:
    return f"gpu:{index}"


def ps_device(index: int) -> str:
    return f"ps:{index}"


def device_kind(device_id: str) -> str:
    """Classify a device reference: 'gpu', 'host', 'cpu', or 'ps'."""
    if device_id == HOST_DEVICE:
        return "host"
    head, _, tail = device_id.partition(":")
    if head in ("gpu", "cpu", "ps") and tail.isdigit():
        return head
    raise ConfigError(f"unknown device reference {device_id!r}")


def device_index(device_id: str) -> int:
    return int(device_id.partition(":")[2])


def effective_link(platform: PlatformSpec, src: str, dst: str) -> LinkSpec:
    """Resolve the link a transfer between two devices travels over.

    GPU pairs use the platform's GPU fabric when it supports peer-to-peer;
    otherwise the transfer stages through host memory and pays the host link
    twice (doubled latency, bandwidth bounded by the host link and a fair
    share of host memory bandwidth). Parameter servers sit across the NIC.
    """
    a, b = device_kind(src), device_kind(dst)
    for ref, kind in ((src, a), (dst, b)):
        if kind == "gpu" and device_index(ref) >= len(platform.gpus):
            raise ConfigError(f"platform {platform.name} has no device {ref}")
        if kind == "cpu" and device_index(ref) >= len(platform.cpu_sockets):
            raise ConfigError(f"platform {platform.name} has no device {ref}")
    if "ps" in (a, b):
        return platform.nic
    if a == "gpu" and b == "gpu":
        if platform.intra_gpu_link.kind == LINK_GPU_P2P:
            return platform.intra_gpu_link
        share = aggregate(platform, HOST_BW) / max(len(platform.gpus), 1)
        return LinkSpec(
            bandwidth=min(platform.host_device_link.bandwidth, share),
            latency=2.0 * platform.host_device_link.latency,
            kind=LINK_HOST_STAGING,
        )
    if "gpu" in (a, b):
        return platform.host_device_link
    return platform.host_device_link


# ---------------------------------------------------------------------------
# presets

_CPU_SOCKET = DeviceSpec(
    kind=DEVICE_CPU,
    mem_capacity=128 * GIB,
    mem_bandwidth=125e9,
    compute=20 * 32e9,  # 20 cores at 32 GFLOP/s each
    per_op_overhead=2e-6,
    per_lookup_overhead=5e-9,
)

_ZION_SOCKET = replace(_CPU_SOCKET, mem_capacity=256 * GIB)


def _v100(mem_gib: int) -> DeviceSpec:
    return DeviceSpec(
        kind=DEVICE_GPU,
        mem_capacity=mem_gib * GIB,
        mem_bandwidth=900e9,
        compute=15.7e12,
        per_op_overhead=10e-6,
        per_lookup_overhead=0.0,
    )


_NVLINK = LinkSpec(bandwidth=150e9, latency=10e-6, kind=LINK_GPU_P2P)
_PCIE = LinkSpec(bandwidth=16e9, latency=5e-6, kind=LINK_HOST_STAGING)


def _nic(gbps: float) -> LinkSpec:
    return LinkSpec(bandwidth=gbps * 1e9 / 8.0, latency=25e-6, kind=LINK_NETWORK)


def _big_basin(name: str, gpu_mem_gib: int) -> PlatformSpec:
    return PlatformSpec(
        name=name,
        cpu_sockets=(_CPU_SOCKET,) * 2,
        gpus=(_v100(gpu_mem_gib),) * 8,
        intra_gpu_link=_NVLINK,
        host_device_link=_PCIE,
        nic=_nic(100),
        power_units=7.3,
    )


def platform_preset(name: str) -> PlatformSpec:
    if name == "CPU":
        return PlatformSpec(
            name="CPU",
            cpu_sockets=(_CPU_SOCKET,) * 2,
            gpus=(),
            intra_gpu_link=_PCIE,
            host_device_link=_PCIE,
            nic=_nic(25),
            power_units=1.0,
        )
    if name == "BigBasin16":
        return _big_basin("BigBasin16", 16)
    if name == "BigBasin32":
        return _big_basin("BigBasin32", 32)
    if name == "ZionPrototype":
        # No GPU peer-to-peer fabric: GPU traffic stages through host memory.
        # Power draw is deliberately unset and must come from the config.
        return PlatformSpec(
            name="ZionPrototype",
            cpu_sockets=(_ZION_SOCKET,) * 8,
            gpus=(_v100(32),) * 8,
            intra_gpu_link=LinkSpec(bandwidth=16e9, latency=10e-6, kind=LINK_HOST_STAGING),
            host_device_link=_PCIE,
            nic=_nic(400),
            power_units=None,
        )
    raise ConfigError(
        f"unknown platform preset {name!r}; available: {', '.join(PLATFORM_PRESET_NAMES)}"
    )


# ---------------------------------------------------------------------------
# JSON serialization


def _device_to_doc(d: DeviceSpec) -> dict:
    return {
        "kind": d.kind,
        "mem_capacity": d.mem_capacity,
        "mem_bandwidth": d.mem_bandwidth,
        "compute": d.compute,
        "per_op_overhead": d.per_op_overhead,
        "per_lookup_overhead": d.per_lookup_overhead,
    }


def _device_from_doc(doc: dict) -> DeviceSpec:
    return DeviceSpec(
        kind=doc["kind"],
        mem_capacity=int(doc["mem_capacity"]),
        mem_bandwidth=float(doc["mem_bandwidth"]),
        compute=float(doc["compute"]),
        per_op_overhead=float(doc.get("per_op_overhead", 0.0)),
        per_lookup_overhead=float(doc.get("per_lookup_overhead", 0.0)),
    )


def _link_to_doc(l: LinkSpec) -> dict:
    return {"bandwidth": l.bandwidth, "latency": l.latency, "kind": l.kind}


def _link_from_doc(doc: dict) -> LinkSpec:
    return LinkSpec(
        bandwidth=float(doc["bandwidth"]),
        latency=float(doc["latency"]),
        kind=doc["kind"],
    )


def platform_to_doc(p: PlatformSpec) -> dict:
    return {
        "name": p.name,
        "cpu_sockets": [_device_to_doc(d) for d in p.cpu_sockets],
        "gpus": [_device_to_doc(d) for d in p.gpus],
        "intra_gpu_link": _link_to_doc(p.intra_gpu_link),
        "host_device_link": _link_to_doc(p.host_device_link),
        "nic": _link_to_doc(p.nic),
        "power_units": p.power_units,
        "cores_per_socket": p.cores_per_socket,
    }


def platform_from_doc(doc: dict) -> PlatformSpec:
    try:
        power = doc.get("power_units")
        return PlatformSpec(
            name=doc.get("name", "custom"),
            cpu_sockets=tuple(_device_from_doc(d) for d in doc["cpu_sockets"]),
            gpus=tuple(_device_from_doc(d) for d in doc.get("gpus", [])),
            intra_gpu_link=_link_from_doc(doc["intra_gpu_link"]),
            host_device_link=_link_from_doc(doc["host_device_link"]),
            nic=_link_from_doc(doc["nic"]),
            power_units=None if power is None else float(power),
            cores_per_socket=int(doc.get("cores_per_socket", 20)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed platform document: {exc}") from exc
