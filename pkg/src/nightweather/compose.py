"""Scene composition and dataset building.

A scene recipe applies flare first, then adds illumination-weighted weather
residuals on top of the flared image:

    X_d = clip(X_flare + sum_e 1_e * omega_e * G_e(X_flare))

where omega_e is the Retinex illumination map of X_flare for haze, rain
streak and snow, and identically 1 for raindrops. Clipping happens once,
after summation.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import weather
from .core import (
    ImageRgb,
    InvalidInput,
    InvalidRecipe,
    IoError,
    Plane,
    RNG_NAME,
    SeededRng,
    load_png,
    load_png_plane,
    save_png,
)
from .flare import FlareParams, apply_flare, apsf_kernel, extract_light_sources
from .retinex import decompose
from .weather import (
    HazeParams,
    RaindropParams,
    RainStreakParams,
    ResidualLayer,
    SnowParams,
    WeatherEffect,
)

SCHEMA_VERSION = 1

CATEGORIES = (
    "Rain Scene",
    "Snow Scene",
    "Haze",
    "Rain Streak",
    "Raindrop",
    "Snow",
    "Flare",
)

_PARAM_TYPES = {
    WeatherEffect.HAZE: HazeParams,
    WeatherEffect.RAIN_STREAK: RainStreakParams,
    WeatherEffect.RAINDROP: RaindropParams,
    WeatherEffect.SNOW: SnowParams,
}

_GENERATORS = {
    WeatherEffect.HAZE: weather.gen_haze,
    WeatherEffect.RAIN_STREAK: weather.gen_rain_streak,
    WeatherEffect.RAINDROP: weather.gen_raindrop,
    WeatherEffect.SNOW: weather.gen_snow,
}


@dataclass
class EffectEntry:
    effect: WeatherEffect
    params: object
    indicator: int = 1


@dataclass
class SceneRecipe:
    effects: List[EffectEntry] = field(default_factory=list)
    flare: Optional[FlareParams] = None
    apsf_size: int = 21
    apsf_sigma: float = 3.0
    apsf_gamma: float = 2.5
    seed: int = 0

    def validate(self):
        seen = set()
        for entry in self.effects:
            if entry.effect in seen:
                raise InvalidRecipe(f"duplicate effect {entry.effect.value}")
            seen.add(entry.effect)
            if entry.indicator not in (0, 1):
                raise InvalidRecipe("indicator must be 0 or 1")


@dataclass
class DegradedSample:
    ground_truth: ImageRgb
    flared: ImageRgb
    degraded: ImageRgb
    labels: Dict[str, int]
    beta: float
    seed: int
    recipe: dict
    omega_stats: Dict[str, Dict[str, float]]


def compose_scene(image: ImageRgb, recipe: SceneRecipe) -> DegradedSample:
    recipe.validate()
    beta = 0.0
    if recipe.flare is not None:
        light = extract_light_sources(image, recipe.flare.tau_percentile, recipe.flare.feather_radius)
        kernel = apsf_kernel(recipe.apsf_size, recipe.apsf_sigma, recipe.apsf_gamma)
        flared, beta = apply_flare(image, light, kernel, recipe.flare)
    else:
        flared = ImageRgb(image.data.copy())

    active = [e for e in recipe.effects if e.indicator == 1]
    labels = {e.value: 0 for e in WeatherEffect}
    labels["flare"] = 1 if recipe.flare is not None else 0
    omega_stats: Dict[str, Dict[str, float]] = {}

    total = np.zeros_like(flared.data)
    illum = None
    for entry in active:
        labels[entry.effect.value] = 1
        gen = _GENERATORS[entry.effect]
        if entry.effect == WeatherEffect.HAZE:
            residual = gen(flared, entry.params)
        else:
            rng = SeededRng(recipe.seed, entry.effect.value)
            residual = gen(flared, entry.params, rng)
        if entry.effect == WeatherEffect.RAINDROP:
            omega = np.ones(flared.data.shape[:2])
        else:
            if illum is None:
                illum = decompose(flared).illumination.data
            omega = illum
        omega_stats[entry.effect.value] = {
            "min": float(omega.min()),
            "mean": float(omega.mean()),
            "max": float(omega.max()),
        }
        total += omega[:, :, None] * residual.data

    degraded = ImageRgb(np.clip(flared.data + total, 0.0, 1.0))
    return DegradedSample(
        ground_truth=image,
        flared=flared,
        degraded=degraded,
        labels=labels,
        beta=beta,
        seed=recipe.seed,
        recipe=recipe_to_dict(recipe),
        omega_stats=omega_stats,
    )


# --- recipe (de)serialization -------------------------------------------------


def _haze_params_to_dict(p: HazeParams) -> dict:
    d = {"airlight": list(p.airlight), "beta": p.beta}
    if p.depth_plane is not None:
        raise InvalidRecipe("external depth planes are referenced by path in JSON recipes")
    if p.depth_gradient is not None:
        d["depth"] = {"gradient": list(p.depth_gradient)}
    else:
        d["depth"] = {"constant": p.depth_constant}
    return d


def _haze_params_from_dict(d: dict) -> HazeParams:
    depth = d.get("depth", {"constant": 1.0})
    kwargs = dict(airlight=tuple(d["airlight"]), beta=d["beta"], depth_constant=None)
    if "constant" in depth:
        kwargs["depth_constant"] = depth["constant"]
    elif "gradient" in depth:
        kwargs["depth_gradient"] = tuple(depth["gradient"])
    elif "plane" in depth:
        kwargs["depth_plane"] = load_png_plane(depth["plane"])
    else:
        raise InvalidRecipe("haze depth must be constant, gradient, or plane")
    return HazeParams(**kwargs)


def recipe_to_dict(recipe: SceneRecipe) -> dict:
    effects = []
    for entry in recipe.effects:
        if entry.effect == WeatherEffect.HAZE:
            params = _haze_params_to_dict(entry.params)
        else:
            params = asdict(entry.params)
            for k, v in params.items():
                if isinstance(v, tuple):
                    params[k] = list(v)
        effects.append({"effect": entry.effect.value, "indicator": entry.indicator, "params": params})
    out = {
        "schema_version": SCHEMA_VERSION,
        "seed": recipe.seed,
        "effects": effects,
        "flare": asdict(recipe.flare) if recipe.flare is not None else None,
    }
    if recipe.flare is not None:
        out["apsf"] = {"size": recipe.apsf_size, "sigma": recipe.apsf_sigma, "gamma": recipe.apsf_gamma}
    return out


def recipe_from_dict(d: dict) -> SceneRecipe:
    effects = []
    for e in d.get("effects", []):
        effect = WeatherEffect(e["effect"])
        if effect == WeatherEffect.HAZE:
            params = _haze_params_from_dict(e["params"])
        else:
            cls = _PARAM_TYPES[effect]
            raw = dict(e["params"])
            for k, v in raw.items():
                if isinstance(v, list):
                    raw[k] = tuple(v)
            params = cls(**raw)
        effects.append(EffectEntry(effect, params, e.get("indicator", 1)))
    flare = FlareParams(**d["flare"]) if d.get("flare") else None
    apsf = d.get("apsf", {})
    return SceneRecipe(
        effects=effects,
        flare=flare,
        apsf_size=apsf.get("size", 21),
        apsf_sigma=apsf.get("sigma", 3.0),
        apsf_gamma=apsf.get("gamma", 2.5),
        seed=d.get("seed", 0),
    )


# --- dataset building ---------------------------------------------------------


def _sample_seed(master_seed: int, sample_id: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{sample_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def sample_recipe(category: str, rng: SeededRng, seed: int) -> SceneRecipe:
    """Draw a recipe for one dataset category from documented parameter ranges."""
    g = rng.generator

    def haze():
        grey = g.uniform(0.55, 0.85)
        return EffectEntry(
            WeatherEffect.HAZE,
            HazeParams(
                airlight=(grey, grey, min(1.0, grey + g.uniform(0.0, 0.05))),
                beta=g.uniform(0.6, 1.6),
                depth_constant=None,
                depth_gradient=(g.uniform(0.3, 0.7), g.uniform(0.9, 1.5)),
            ),
        )

    def rain_streak():
        return EffectEntry(
            WeatherEffect.RAIN_STREAK,
            RainStreakParams(
                angle_deg=g.uniform(-20, 20),
                streak_length=int(g.integers(7, 15)),
                density=g.uniform(0.05, 0.2),
                noise_threshold=g.uniform(0.45, 0.6),
                upsample_factor=int(g.integers(2, 5)),
                intensity=g.uniform(0.4, 0.8),
            ),
        )

    def raindrop():
        return EffectEntry(
            WeatherEffect.RAINDROP,
            RaindropParams(
                drop_count=int(g.integers(4, 12)),
                radius_range=(g.uniform(2.0, 3.5), g.uniform(4.0, 8.0)),
                jitter=g.uniform(0.5, 2.0),
                blur_sigma=g.uniform(0.5, 1.5),
                darkening=g.uniform(0.75, 0.95),
            ),
        )

    def snow():
        return EffectEntry(
            WeatherEffect.SNOW,
            SnowParams(
                density=g.uniform(0.1, 0.4),
                scale_range=(g.uniform(0.8, 1.2), g.uniform(1.5, 3.0)),
                brightness=g.uniform(0.7, 1.0),
            ),
        )

    def flare():
        return FlareParams(
            alpha=0.995,
            beta_base=g.uniform(0.2, 0.4),
            rho_ref=1.0 / 64.0,
            tau_percentile=g.uniform(98.0, 99.5),
            feather_radius=g.uniform(1.0, 3.0),
        )

    effects: List[EffectEntry] = []
    flare_params: Optional[FlareParams] = None
    if category == "Rain Scene":
        flare_params = flare()
        effects = [haze(), rain_streak()]
        if g.uniform() < 0.5:
            effects.append(raindrop())
    elif category == "Snow Scene":
        flare_params = flare()
        effects = [haze(), snow()]
    elif category == "Flare":
        flare_params = flare()
    elif category in ("Haze", "Rain Streak", "Raindrop", "Snow"):
        maker = {"Haze": haze, "Rain Streak": rain_streak, "Raindrop": raindrop, "Snow": snow}[category]
        if g.uniform() < 0.5:
            flare_params = flare()
        effects = [maker()]
    else:
        raise InvalidInput(f"unknown category {category!r}")
    return SceneRecipe(effects=effects, flare=flare_params, seed=seed)


def atomic_write_json(obj, path: Path) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            json.dump(obj, f, indent=2, sort_keys=True)
            f.write("\n")
        os.replace(tmp, path)
    except OSError as e:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise IoError(str(e)) from e


def _slug(text: str) -> str:
    return text.lower().replace(" ", "_")


def build_dataset(gt_dir, plan: Dict[str, int], out_dir, master_seed: int, jobs: int = 1) -> dict:
    """Compose `plan[category]` samples per category for every ground truth.

    Sample seeds derive from (master seed, sample id) only, so thread
    scheduling cannot change outputs.
    """
    gt_dir, out_dir = Path(gt_dir), Path(out_dir)
    gt_paths = sorted(gt_dir.glob("*.png"))
    if not gt_paths:
        raise InvalidInput(f"no PNG ground truths in {gt_dir}")
    for category in plan:
        if category not in CATEGORIES:
            raise InvalidInput(f"unknown category {category!r}")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(str(e)) from e

    tasks: List[Tuple[str, Path, str]] = []
    for gt_path in gt_paths:
        for category in CATEGORIES:
            for i in range(plan.get(category, 0)):
                sample_id = f"{gt_path.stem}__{_slug(category)}__{i:03d}"
                tasks.append((sample_id, gt_path, category))

    def run_task(task):
        sample_id, gt_path, category = task
        seed = _sample_seed(master_seed, sample_id)
        recipe = sample_recipe(category, SeededRng(master_seed, f"recipe/{sample_id}"), seed)
        sample = compose_scene(load_png(gt_path), recipe)
        degraded_path = out_dir / f"{sample_id}_d.png"
        flare_path = out_dir / f"{sample_id}_flare.png"
        save_png(sample.degraded, degraded_path)
        save_png(sample.flared, flare_path)
        return {
            "id": sample_id,
            "category": category,
            "gt_path": str(gt_path),
            "degraded_path": str(degraded_path),
            "flare_path": str(flare_path),
            "labels": sample.labels,
            "beta": sample.beta,
            "seed": seed,
            "recipe": sample.recipe,
            "omega_stats": sample.omega_stats,
        }

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(run_task, tasks))
    else:
        entries = [run_task(t) for t in tasks]

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "generator": RNG_NAME,
        "master_seed": master_seed,
        "samples": entries,
    }
    atomic_write_json(manifest, out_dir / "manifest.json")
    return manifest
