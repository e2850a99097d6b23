"""Cloud cost model over the bundled machine-image and configuration tables.

Pricing follows a resource-unit scheme: an image's hourly price is spread
over a weighted sum of its cores and RAM (weight alpha, about 6, reflecting
how providers price CPU against memory), giving a per-unit rate u_i.  Any
resource subset of that image then costs (alpha * cores + ram_gb) * u_i per
hour.  Joined with run metrics this yields cost-throughput records.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources as ir

from .engine.cluster import ClusterConfig
from .engine.execute import RunMetrics

DEFAULT_ALPHA = 6.0


class CostError(Exception):
    pass


class UnknownImageFamilyError(CostError):
    def __init__(self, family: str):
        super().__init__(f"no image matches family {family!r}")
        self.family = family


class CapacityError(CostError):
    pass


@dataclass(frozen=True)
class ImageType:
    """One machine-image row, verbatim from the bundled table."""

    name: str
    cph_on_demand: float
    cph_spot: float
    cph_reserved: float
    cpu: str
    ram_gb: float
    cores: int
    network_bw: float
    ebs_bw: float
    storage: str

    def __post_init__(self):
        for attr in ("cph_on_demand", "cph_spot", "cph_reserved", "ram_gb", "cores"):
            if getattr(self, attr) <= 0:
                raise ValueError(f"{self.name}: {attr} must be positive")


@dataclass(frozen=True)
class CostModel:
    alpha: float = DEFAULT_ALPHA
    pricing: str = "on-demand"  # or "spot"

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.pricing not in ("on-demand", "spot"):
            raise ValueError(f"unknown pricing mode {self.pricing!r}")

    def cph_of(self, img: ImageType) -> float:
        return img.cph_on_demand if self.pricing == "on-demand" else img.cph_spot


@dataclass(frozen=True)
class ConfigSpec:
    """One benchmark configuration row: an id, an image family, a cluster."""

    id: str
    image_family: str
    cluster: ClusterConfig
    network_bw: float
    ebs_bw: float


@dataclass(frozen=True)
class ConfigCost:
    config_id: str
    n_cores: float
    n_ram: float
    u_i: float
    cph_config: float
    node_count: int


def unit_cost(img: ImageType, model: CostModel) -> float:
    """Hourly price of one weighted resource unit of the image."""
    return model.cph_of(img) / (model.alpha * img.cores + img.ram_gb)


def config_cost(
    config_id: str,
    n_cores: float,
    n_ram: float,
    img: ImageType,
    model: CostModel,
    paper_rounding: bool = False,
) -> ConfigCost:
    """Price a resource subset of an image.

    paper_rounding reproduces the published worked example, which rounds
    the unit cost to 3 decimals and the result to cents; the default is
    exact arithmetic.
    """
    if n_cores <= 0 or n_ram <= 0:
        raise ValueError("resource totals must be positive")
    node_count = max(
        math.ceil(n_cores / img.cores),
        math.ceil(n_ram / img.ram_gb),
    )
    u = unit_cost(img, model)
    if paper_rounding:
        u = round(u, 3)
        cph = round((model.alpha * n_cores + n_ram) * u, 2)
    else:
        cph = (model.alpha * n_cores + n_ram) * u
    return ConfigCost(
        config_id=config_id,
        n_cores=n_cores,
        n_ram=n_ram,
        u_i=u,
        cph_config=cph,
        node_count=node_count,
    )


def resolve_image(family: str, images) -> ImageType:
    """Family name to its largest image, the one the published math uses."""
    candidates = [img for img in images if img.name.startswith(family + ".")]
    if not candidates:
        raise UnknownImageFamilyError(family)
    return max(candidates, key=lambda img: img.cores)


def cost_of_config(
    spec: ConfigSpec,
    images,
    model: CostModel,
    per_tm: bool = False,
    paper_rounding: bool = False,
) -> ConfigCost:
    """Price one configuration, per taskmanager or for the whole cluster.

    The published worked example prices a single taskmanager's resources;
    cluster totals multiply by the taskmanager count.  Callers get both by
    flipping per_tm.
    """
    img = resolve_image(spec.image_family, images)
    cluster = spec.cluster
    if cluster.cores_per_tm > img.cores or cluster.ram_per_tm > img.ram_gb:
        raise CapacityError(
            f"{spec.id}: a taskmanager of {cluster.cores_per_tm} cores / "
            f"{cluster.ram_per_tm} GB does not fit on {img.name}"
        )
    scale = 1 if per_tm else cluster.taskmanagers
    return config_cost(
        spec.id,
        cluster.cores_per_tm * scale,
        cluster.ram_per_tm * scale,
        img,
        model,
        paper_rounding=paper_rounding,
    )


# -- table loading ----------------------------------------------------------

def _num(text: str):
    value = float(text)
    return int(value) if value.is_integer() else value


def _fmt(value) -> str:
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def load_config_tables(
    configs_text: str | None = None, images_text: str | None = None
) -> tuple[list[ConfigSpec], list[ImageType]]:
    """Parse the configuration and image tables; defaults to the bundled
    ones.  Every configuration must reference a known image family."""
    if configs_text is None:
        configs_text = (ir.files("cqlbatch") / "resources" / "aws_configs.csv").read_text()
    if images_text is None:
        images_text = (ir.files("cqlbatch") / "resources" / "aws_images.csv").read_text()

    images: list[ImageType] = []
    for row in csv.DictReader(io.StringIO(images_text)):
        try:
            images.append(ImageType(
                name=row["name"],
                cph_on_demand=float(row["cph_on_demand"]),
                cph_spot=float(row["cph_spot"]),
                cph_reserved=float(row["cph_reserved"]),
                cpu=row["cpu"],
                ram_gb=_num(row["ram_gb"]),
                cores=int(row["cores"]),
                network_bw=_num(row["network_bw"]),
                ebs_bw=_num(row["ebs_bw"]),
                storage=row["storage"],
            ))
        except (KeyError, ValueError) as exc:
            raise CostError(f"bad image row {row!r}: {exc}") from exc

    configs: list[ConfigSpec] = []
    for row in csv.DictReader(io.StringIO(configs_text)):
        try:
            spec = ConfigSpec(
                id=row["id"],
                image_family=row["image_family"],
                cluster=ClusterConfig(
                    taskmanagers=int(row["taskmanagers"]),
                    cores_per_tm=int(row["cores_per_tm"]),
                    ram_per_tm=_num(row["ram_per_tm"]),
                    parallelism=int(row["parallelism"]),
                ),
                network_bw=_num(row["network_bw"]),
                ebs_bw=_num(row["ebs_bw"]),
            )
        except (KeyError, ValueError) as exc:
            raise CostError(f"bad config row {row!r}: {exc}") from exc
        resolve_image(spec.image_family, images)  # unknown family is an error
        configs.append(spec)
    return configs, images


def configs_to_csv(configs) -> str:
    lines = ["id,image_family,taskmanagers,cores_per_tm,ram_per_tm,parallelism,network_bw,ebs_bw"]
    for c in configs:
        lines.append(",".join([
            c.id, c.image_family, str(c.cluster.taskmanagers),
            str(c.cluster.cores_per_tm), _fmt(c.cluster.ram_per_tm),
            str(c.cluster.parallelism), _fmt(c.network_bw), _fmt(c.ebs_bw),
        ]))
    return "\n".join(lines) + "\n"


def images_to_csv(images) -> str:
    lines = ["name,cph_on_demand,cph_spot,cph_reserved,cpu,ram_gb,cores,network_bw,ebs_bw,storage"]
    for img in images:
        lines.append(",".join([
            img.name, _fmt(img.cph_on_demand), _fmt(img.cph_spot),
            _fmt(img.cph_reserved), img.cpu, _fmt(img.ram_gb), str(img.cores),
            _fmt(img.network_bw), _fmt(img.ebs_bw), img.storage,
        ]))
    return "\n".join(lines) + "\n"


# -- cost-throughput records ------------------------------------------------

RECORD_FIELDS = (
    "config_id", "throughput_mrps", "cph_config", "toc", "n_slots", "hypercache",
)


def cost_performance_records(runs, images, model: CostModel) -> list[dict]:
    """One raw record per run: (ConfigSpec, RunMetrics, hypercache flag)."""
    records = []
    for spec, metrics, hypercache in runs:
        if metrics.wall_time <= 0:
            raise ValueError(f"{spec.id}: run has no wall time")
        cost = cost_of_config(spec, images, model)
        records.append({
            "config_id": spec.id,
            "throughput_mrps": metrics.throughput / 1e6,
            "cph_config": cost.cph_config,
            "toc": spec.cluster.toc,
            "n_slots": spec.cluster.n_slots,
            "hypercache": "on" if hypercache else "off",
        })
    return records


def records_to_csv(records) -> str:
    # floats go through %.6g: record values are measurements, not table rows
    # that must survive a round trip
    lines = [",".join(RECORD_FIELDS)]
    for rec in records:
        lines.append(",".join(f"{v:.6g}" if isinstance(v, float) else str(v)
                              for v in (rec[f] for f in RECORD_FIELDS)))
    return "\n".join(lines) + "\n"
