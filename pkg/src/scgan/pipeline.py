"""Stage orchestration on disk: each stage reads its prerequisites' files,
writes its own, and records a manifest entry keyed by a config hash."""
from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from . import nncore
from .config import ExperimentConfig
from .datasets import Batch2D, load_batch, sample_dataset, save_batch
from .decoder import (
    DiscriminatorPair,
    StochasticDecoder,
    generate,
    make_decoder,
    make_discriminators,
    reconstruct,
    reconstruct_eval,
    train_decoder,
)
from .encoder import EncoderModel, embed, make_encoder, train_encoder
from .errors import PrerequisiteError, StaleArtifactError, UsageError
from .latent import (
    ClusterModel,
    LatentSamplingMode,
    LatentSources,
    MapperEnsemble,
    kmeans,
    load_clusters,
    mapper_from_store,
    mapper_to_store,
    sample_latent,
    save_clusters,
    train_ensemble,
)
from .metrics import ModeRow, build_report, energy_distance, summary_table
from .plotting import latent_extent, latent_projection, plot_scatter

STAGES = ("data", "encoder", "cluster", "mappers", "decoder", "evaluate", "plot")
MANIFEST = "manifest.txt"

# config sections each stage depends on, cumulative along the pipeline
_BASE = ("dataset", "n_train", "n_test", "seed")
STAGE_KEYS = {
    "data": _BASE,
    "encoder": _BASE + ("encoder",),
    "cluster": _BASE + ("encoder", "clustering"),
    "mappers": _BASE + ("encoder", "clustering", "mapper"),
    "decoder": _BASE + ("encoder", "clustering", "mapper", "decoder"),
    "evaluate": _BASE + ("encoder", "clustering", "mapper", "decoder", "eval"),
    "plot": _BASE + ("encoder", "clustering", "mapper", "decoder", "eval", "plot"),
}


def stage_seed(cfg: ExperimentConfig, stage: str, *extra: int) -> int:
    seq = np.random.SeedSequence([cfg.seed, STAGES.index(stage), *extra])
    return int(seq.generate_state(1)[0])


def prerequisites(stage: str, cfg: ExperimentConfig) -> tuple[str, ...]:
    if stage == "data":
        return ()
    if stage == "decoder":
        modes = set(cfg.modes)
        if LatentSamplingMode.MAPPING_NETWORK in modes:
            return ("data", "encoder", "cluster", "mappers")
        if LatentSamplingMode.NOISY_CLUSTER_CENTERS in modes:
            return ("data", "encoder", "cluster")
        return ("data", "encoder")
    if stage in ("evaluate", "plot"):
        return prerequisites("decoder", cfg) + ("decoder",)
    return STAGES[: STAGES.index(stage)]


# ---------------------------------------------------------------- manifest


def read_manifest(out: Path) -> dict:
    path = Path(out) / MANIFEST
    if not path.exists():
        return {}
    return json.loads(path.read_text())


def write_manifest(out: Path, manifest: dict) -> None:
    ordered = {s: manifest[s] for s in STAGES if s in manifest}
    (Path(out) / MANIFEST).write_text(json.dumps(ordered, indent=2) + "\n")


def _check_prerequisites(stage: str, cfg: ExperimentConfig, out: Path, manifest: dict) -> None:
    for pre in prerequisites(stage, cfg):
        entry = manifest.get(pre)
        if entry is None:
            raise PrerequisiteError(f"stage {stage!r} needs stage {pre!r}; run {pre!r} first")
        if entry["config_hash"] != cfg.hash(STAGE_KEYS[pre]):
            raise StaleArtifactError(
                f"artifacts of stage {pre!r} were built with a different config; rerun {pre!r}"
            )
        missing = [f for f in entry["files"] if not (out / f).exists()]
        if missing:
            raise PrerequisiteError(f"stage {pre!r} output {missing[0]} is missing; rerun {pre!r}")


def is_up_to_date(stage: str, cfg: ExperimentConfig, out: Path) -> bool:
    entry = read_manifest(out).get(stage)
    return (
        entry is not None
        and entry["config_hash"] == cfg.hash(STAGE_KEYS[stage])
        and all((Path(out) / f).exists() for f in entry["files"])
    )


# ---------------------------------------------------------------- loaders


def load_data(out: Path) -> tuple[Batch2D, Batch2D]:
    return load_batch(out / "train.csv"), load_batch(out / "test.csv")


def encoder_skeleton(cfg: ExperimentConfig) -> EncoderModel:
    h = cfg["encoder.hidden"]
    return make_encoder(np.random.default_rng(0), latent_dim=cfg["encoder.latent_dim"], hidden=(h, h))


def load_encoder(cfg: ExperimentConfig, out: Path) -> EncoderModel:
    enc = encoder_skeleton(cfg)
    nncore.load_params_into(enc.params, out / "encoder.scg")
    return enc


def load_clusters_from(out: Path, latents: np.ndarray | None = None) -> ClusterModel:
    return load_clusters(out / "clusters.csv", out / "assignments.txt", latents)


def mapper_file(k: int) -> str:
    return f"mapper_{k:03d}.scg"


def load_ensemble(cfg: ExperimentConfig, out: Path, clusters: ClusterModel) -> MapperEnsemble:
    mappers = [
        mapper_from_store(nncore.load_params(out / mapper_file(k)), cfg["encoder.latent_dim"], cfg.mapper())
        for k in range(clusters.K)
    ]
    return MapperEnsemble(mappers, clusters.weights)


def load_sources(cfg: ExperimentConfig, out: Path, enc: EncoderModel, train: Batch2D) -> LatentSources:
    latents = embed(enc, train)
    sources = LatentSources(train_latents=latents)
    if (out / "clusters.csv").exists() and is_up_to_date("cluster", cfg, out):
        sources.clusters = load_clusters_from(out, latents)
        if is_up_to_date("mappers", cfg, out):
            sources.ensemble = load_ensemble(cfg, out, sources.clusters)
    return sources


def decoder_files(mode: LatentSamplingMode) -> tuple[str, str, str, str]:
    m = mode.value
    return f"decoder_{m}.scg", f"drec_{m}.scg", f"dgen_{m}.scg", f"history_{m}.csv"


def load_decoder(cfg: ExperimentConfig, out: Path, mode: LatentSamplingMode) -> tuple[StochasticDecoder, DiscriminatorPair]:
    rng = np.random.default_rng(0)
    dec = make_decoder(rng, latent_dim=cfg["encoder.latent_dim"], noise_dim=cfg["decoder.noise_dim"])
    discs = make_discriminators(rng)
    f_dec, f_rec, f_gen, _ = decoder_files(mode)
    nncore.load_params_into(dec.params, out / f_dec)
    nncore.load_params_into(discs.rec, out / f_rec)
    nncore.load_params_into(discs.gen, out / f_gen)
    return dec, discs


# ---------------------------------------------------------------- stages


def _stage_data(cfg: ExperimentConfig, out: Path) -> list[str]:
    train = sample_dataset(cfg.dataset, cfg["n_train"], stage_seed(cfg, "data", 0))
    test = sample_dataset(cfg.dataset, cfg["n_test"], stage_seed(cfg, "data", 1))
    save_batch(train, out / "train.csv")
    save_batch(test, out / "test.csv")
    return ["train.csv", "test.csv"]


def _stage_encoder(cfg: ExperimentConfig, out: Path) -> list[str]:
    train, _ = load_data(out)
    rng = np.random.default_rng(stage_seed(cfg, "encoder", 0))
    h = cfg["encoder.hidden"]
    enc = make_encoder(rng, latent_dim=cfg["encoder.latent_dim"], hidden=(h, h))
    enc, history = train_encoder(train, cfg.contrastive(), enc, stage_seed(cfg, "encoder", 1))
    nncore.save_params(enc.params, out / "encoder.scg")
    lines = ["iter,loss"] + [f"{i},{v:.17g}" for i, v in enumerate(history)]
    (out / "encoder_loss.csv").write_text("\n".join(lines) + "\n")
    return ["encoder.scg", "encoder_loss.csv"]


def _stage_cluster(cfg: ExperimentConfig, out: Path) -> list[str]:
    train, _ = load_data(out)
    latents = embed(load_encoder(cfg, out), train)
    model = kmeans(latents, cfg.K, stage_seed(cfg, "cluster"), cfg["clustering.max_iters"])
    save_clusters(model, out / "clusters.csv", out / "assignments.txt")
    return ["clusters.csv", "assignments.txt"]


def _stage_mappers(cfg: ExperimentConfig, out: Path) -> list[str]:
    train, _ = load_data(out)
    latents = embed(load_encoder(cfg, out), train)
    clusters = load_clusters_from(out, latents)
    ensemble = train_ensemble(latents, clusters, cfg.mapper(), stage_seed(cfg, "mappers"))
    files = []
    for k, triple in enumerate(ensemble.mappers):
        nncore.save_params(mapper_to_store(triple), out / mapper_file(k))
        files.append(mapper_file(k))
    return files


def _stage_decoder(cfg: ExperimentConfig, out: Path) -> list[str]:
    train, _ = load_data(out)
    enc = load_encoder(cfg, out)
    sources = load_sources(cfg, out, enc, train)
    files, runtimes = [], []
    for i, mode in enumerate(cfg.modes):
        start = time.perf_counter()
        result = train_decoder(
            enc, sources, train, cfg.decoder(mode), stage_seed(cfg, "decoder", i),
            train_latents=sources.train_latents,
        )
        runtimes.append((mode, time.perf_counter() - start))
        f_dec, f_rec, f_gen, f_hist = decoder_files(mode)
        nncore.save_params(result.decoder.params, out / f_dec)
        nncore.save_params(result.discriminators.rec, out / f_rec)
        nncore.save_params(result.discriminators.gen, out / f_gen)
        lines = ["iter,mse,adv_rec,adv_gen"] + [
            f"{it},{a:.17g},{b:.17g},{c:.17g}" for it, a, b, c in result.history
        ]
        (out / f_hist).write_text("\n".join(lines) + "\n")
        files += [f_dec, f_rec, f_gen, f_hist]
    # wall-clock times live apart from the deterministic artifacts
    (out / "decoder_runtime.csv").write_text(
        "mode,runtime_s\n" + "".join(f"{m.value},{t:.3f}\n" for m, t in runtimes)
    )
    return files + ["decoder_runtime.csv"]


def _read_runtimes(out: Path) -> dict[str, float]:
    path = out / "decoder_runtime.csv"
    if not path.exists():
        return {}
    rows = path.read_text().splitlines()[1:]
    return {r.split(",")[0]: float(r.split(",")[1]) for r in rows if r}


def _stage_evaluate(cfg: ExperimentConfig, out: Path) -> list[str]:
    train, test = load_data(out)
    enc = load_encoder(cfg, out)
    sources = load_sources(cfg, out, enc, train)
    runtimes = _read_runtimes(out)
    rows = {}
    for i, mode in enumerate(cfg.modes):
        dec, _ = load_decoder(cfg, out, mode)
        recon = reconstruct_eval(dec, enc, test)
        gen = generate(dec, mode, cfg["eval.n_generate"], sources, stage_seed(cfg, "evaluate", i))
        rows[mode] = ModeRow(recon, energy_distance(gen, test), runtimes.get(mode.value, 0.0))
    report = build_report(cfg.dataset.value, rows, cfg.hash(STAGE_KEYS["decoder"]))
    (out / "report.csv").write_text(report.to_csv())
    summary = summary_table([report])
    flags = "".join(f"{name}: {'yes' if v else 'no'}\n" for name, v in report.flags.items())
    (out / "summary.txt").write_text(
        summary + "\nheld-out test set, n=" + str(len(test)) + "\n" + flags
        + "config fingerprint: " + report.fingerprint + "\n"
    )
    return ["report.csv", "summary.txt"]


def _stage_plot(cfg: ExperimentConfig, out: Path) -> list[str]:
    train, test = load_data(out)
    enc = load_encoder(cfg, out)
    sources = load_sources(cfg, out, enc, train)
    n = cfg["plot.n_points"]
    files = ["fig_data.svg"]
    plot_scatter(train.points[:n], out / "fig_data.svg", title="training data")

    view = latent_projection(sources.train_latents)
    latents = view(sources.train_latents)
    extent = latent_extent(latents)
    classes = sources.clusters.assignments[:n] if sources.clusters is not None else None
    plot_scatter(latents[:n], out / "fig_latents.svg", classes, "encoder latents", extent)
    files.append("fig_latents.svg")

    for i, mode in enumerate(cfg.modes):
        seed = stage_seed(cfg, "plot", i)
        z, which = sample_latent(mode, n, sources, seed, return_clusters=True)
        name = f"fig_latent_{mode.value}.svg"
        plot_scatter(view(z), out / name, which, f"latents: {mode.value}", extent)
        dec, _ = load_decoder(cfg, out, mode)
        gen = generate(dec, mode, n, sources, seed)
        gname = f"fig_generated_{mode.value}.svg"
        plot_scatter(gen, out / gname, None, f"generated: {mode.value}")
        rname = f"fig_reconstruction_{mode.value}.svg"
        plot_scatter(reconstruct(dec, enc, test.points[:n]), out / rname, None, f"reconstruction: {mode.value}")
        files += [name, gname, rname]
    return files


_RUNNERS = {
    "data": _stage_data,
    "encoder": _stage_encoder,
    "cluster": _stage_cluster,
    "mappers": _stage_mappers,
    "decoder": _stage_decoder,
    "evaluate": _stage_evaluate,
    "plot": _stage_plot,
}


def run_stage(stage: str, cfg: ExperimentConfig, out: str | Path, force: bool = False) -> bool:
    """Run one stage; returns False when it was skipped as up to date."""
    if stage not in _RUNNERS:
        raise UsageError(f"unknown stage {stage!r}; expected one of {STAGES}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = read_manifest(out)
    _check_prerequisites(stage, cfg, out, manifest)
    if not force and is_up_to_date(stage, cfg, out):
        return False
    start = time.perf_counter()
    files = _RUNNERS[stage](cfg, out)
    (out / "config.txt").write_text(cfg.to_text())
    manifest = read_manifest(out)
    manifest[stage] = {
        "stage": stage,
        "config_hash": cfg.hash(STAGE_KEYS[stage]),
        "files": files,
        "wall_time_s": round(time.perf_counter() - start, 3),
    }
    write_manifest(out, manifest)
    return True


def run_all(cfg: ExperimentConfig, out: str | Path, force: bool = False) -> list[tuple[str, bool]]:
    return [(stage, run_stage(stage, cfg, out, force)) for stage in STAGES]
