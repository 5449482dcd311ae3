"""Command-line pipeline: train, audit, simulate, patch, report.

Every command is deterministic given its inputs and --seed: re-running
overwrites its output files byte-identically. Timing and progress go to
stderr so they never perturb the outputs. The default output directory is
"." or the FORESTAUDIT_OUT_DIR environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .attacks import (BUILTIN_PROFILES, build_target_rules, load_profile)
from .datasets import default_trace_model, generate_benign_trace
from .ensemble import compute_thresholds
from .forest import train_forest
from .intervals import box_to_json
from .model_io import (ModelFormatError, load_dataset, load_model,
                       save_dataset, save_model, schema_from_dict)
from .patching import (additional_patch, audit_patched, compute_class_maxima,
                       compute_leaf_maxima, essential_patch)
from .schema import UNIT_PKT, default_iot_schema
from .search import SearchStats, generate_recipes
from .simulate import (MODE_ADVERSARIAL, MODE_BENIGN, MODE_NON_ADVERSARIAL,
                       TelemetryEpoch, TimingConfig, run_episode)

log = logging.getLogger("forestaudit")

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_INTERNAL = 3

AUDIT_CSV = "audit.csv"
RECIPES_JSONL = "recipes.jsonl"
EPISODES_CSV = "episodes.csv"
PLANS_JSONL = "plans.jsonl"
PATCHED_MODEL = "patched_model.json"
PATCH_REPORT_CSV = "patch_report.csv"
REAUDIT_CSV = "reaudit.csv"
REAUDIT_RECIPES_JSONL = "reaudit_recipes.jsonl"

AUDIT_COLUMNS = ["target_class", "attack", "impact", "permutations",
                 "recipes_found", "candidates_pre_dedup"]
EPISODE_COLUMNS = ["victim", "attack", "impact", "mode", "shift", "epoch",
                   "label", "score", "threshold", "detected", "attack_pkts",
                   "overhead_pkts", "recipe_selected", "feasible_count"]


def _default_out_dir() -> str:
    return os.environ.get("FORESTAUDIT_OUT_DIR", ".")


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _str_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _subsample(text: str):
    """'sqrt', 'all', an integer count, or a fraction of the feature set."""
    if text in ("sqrt", "all"):
        return text
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected 'sqrt', 'all', int or float, got {text!r}")


def _parse_epochs(text: str) -> list[int]:
    """Epoch spec: comma list of indices and a-b ranges, e.g. '3,10-14'."""
    out: set[int] = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            a, _, b = part.partition("-")
            lo, hi = int(a), int(b)
            if hi < lo:
                raise argparse.ArgumentTypeError(f"bad range {part!r}")
            out.update(range(lo, hi + 1))
        else:
            out.add(int(part))
    return sorted(out)


def _load_schema(path: str | None):
    if path is None:
        return default_iot_schema()
    with open(path, "r", encoding="utf-8") as fh:
        return schema_from_dict(json.load(fh))


def _resolve_profile(spec: str, impact: int):
    if spec in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[spec](impact)
    if os.path.exists(spec):
        return load_profile(spec, impact)
    raise ValueError(
        f"unknown attack {spec!r}: not one of {sorted(BUILTIN_PROFILES)} "
        "and no such profile file")


def _out_path(args, name: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_jsonl(path: str, objects) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for obj in objects:
            fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def cmd_train(args) -> int:
    schema = _load_schema(args.schema)
    started = time.perf_counter()
    X, y = load_dataset(args.dataset, schema)
    ensemble = train_forest(
        X, y, schema, n_trees=args.trees, max_depth=args.max_depth,
        min_leaf=args.min_leaf, bootstrap_fraction=args.bootstrap,
        feature_subsample=args.feature_subsample, seed=args.seed)
    thresholds = compute_thresholds(ensemble, X, y)
    save_model(args.out, ensemble, thresholds)
    log.info("trained %d trees on %d rows (%d classes) in %.2fs -> %s",
             len(ensemble.trees), len(y), len(ensemble.classes),
             time.perf_counter() - started, args.out)
    for label in sorted(thresholds):
        t = thresholds[label]
        log.info("threshold %s: mu=%.4f sigma=%.4f t=%.4f",
                 label, t.mu, t.sigma, t.t)
    return EXIT_OK


def _audit_cells(ensemble, thresholds, classes, attack_spec, impacts,
                 permutations, seed, time_budget, p_cap):
    """Run the recipe search per (class, impact); yields CSV rows + recipes."""
    rows = []
    lines = []
    for target in classes:
        if target not in ensemble.real_classes:
            raise ValueError(f"unknown target class {target!r}")
        t_d = thresholds[target].t
        for impact in impacts:
            profile = _resolve_profile(attack_spec, impact)
            rules = build_target_rules(profile, ensemble.schema)
            stats = SearchStats()
            started = time.perf_counter()
            recipes = generate_recipes(
                ensemble, rules, target, t_d, permutations, seed,
                p_cap=p_cap, time_budget_s=time_budget, stats=stats)
            elapsed = time.perf_counter() - started
            log.info("audit %s/%s impact=%d: %d recipes (%d pre-dedup) in %.2fs%s",
                     target, profile.name, impact, len(recipes),
                     stats.recipes_found, elapsed,
                     " [partial: budget hit]" if stats.partial else "")
            rows.append([target, profile.name, impact, permutations,
                         len(recipes), stats.recipes_found])
            for box in recipes:
                lines.append({"target_class": target, "attack": profile.name,
                              "impact": impact,
                              "recipe": box_to_json(box, ensemble.schema)})
    return rows, lines


def cmd_audit(args) -> int:
    ensemble, thresholds = load_model(args.model)
    classes = args.target_class or sorted(ensemble.real_classes)
    rows, lines = _audit_cells(
        ensemble, thresholds, classes, args.attack, args.impact,
        args.permutations, args.seed, args.time_budget or None, args.p_cap)
    _write_csv(_out_path(args, AUDIT_CSV), AUDIT_COLUMNS, rows)
    _write_jsonl(_out_path(args, RECIPES_JSONL), lines)
    log.info("wrote %s and %s under %s", AUDIT_CSV, RECIPES_JSONL, args.out_dir)
    return EXIT_OK


def _load_trace(args, schema, victim):
    if args.trace:
        X, y = load_dataset(args.trace, schema)
        rows = [x for x, label in zip(X, y) if label == victim]
        if not rows:
            raise ValueError(f"trace file has no rows labelled {victim!r}")
        rows = rows[:args.epochs] if args.epochs else rows
        return [TelemetryEpoch(index=k, start_s=k * args.window,
                               window_s=args.window, counts=x)
                for k, x in enumerate(rows)]
    model = default_trace_model()
    if victim not in model.classes:
        raise ValueError(
            f"no builtin traffic profile for class {victim!r}; supply --trace")
    return generate_benign_trace(model, victim, args.epochs or 35,
                                 args.trace_seed)


def cmd_simulate(args) -> int:
    ensemble, thresholds = load_model(args.model)
    victim = args.victim
    if victim not in ensemble.real_classes:
        raise ValueError(f"unknown victim class {victim!r}")
    t_d = thresholds[victim].t
    trace = _load_trace(args, ensemble.schema, victim)
    n = len(trace)
    attack_epochs = frozenset(args.attack_epochs if args.attack_epochs
                              else range(n // 3, max(2 * n // 3, n // 3 + 1)))
    episode_rows = []
    plan_lines = []

    def run(mode, shift, impact, profile, recipes):
        timing = TimingConfig(mode=mode, shift_s=shift,
                              attack_epochs=attack_epochs)
        outcomes = run_episode(ensemble, thresholds, recipes, trace, profile,
                               timing, args.seed, p_cap=args.p_cap)
        for o in outcomes:
            episode_rows.append([victim, profile.name, impact, mode,
                                 float(shift), o.epoch, o.label,
                                 float(o.score), float(o.threshold),
                                 o.detected, o.attack_pkts, o.overhead_pkts,
                                 o.recipe_selected, o.feasible_count])
            if o.plan is not None:
                plan_lines.append({
                    "victim": victim, "attack": profile.name, "impact": impact,
                    "mode": mode, "shift": float(shift), "epoch": o.epoch,
                    "overhead_packets": o.plan.overhead_packets,
                    "overhead_bytes": o.plan.overhead_bytes,
                    "corrective_icmp": o.plan.corrective_icmp,
                    "injections": [{
                        "flow": inj.flow, "packets": inj.packets,
                        "frame_bytes": inj.frame_bytes, "spoof": inj.spoof,
                    } for inj in o.plan.injections],
                    "extra_counts": [{"feature": name, "count": c}
                                     for name, c in o.plan.extra_counts],
                })
        detected = sum(o.detected for o in outcomes)
        log.info("simulate %s %s impact=%s shift=%s: %d/%d epochs detected",
                 victim, mode, impact, shift, detected, n)
        if mode == MODE_ADVERSARIAL:
            attack_total = sum(o.attack_pkts for o in outcomes)
            overhead_total = sum(o.overhead_pkts for o in outcomes)
            if attack_total:
                log.info("  overhead/attack packet ratio: %d/%d = %.2f%%",
                         overhead_total, attack_total,
                         100.0 * overhead_total / attack_total)

    run(MODE_BENIGN, 0.0, 0, _resolve_profile(args.attack, 1), [])
    for impact in args.impact:
        profile = _resolve_profile(args.attack, impact)
        rules = build_target_rules(profile, ensemble.schema)
        stats = SearchStats()
        recipes = generate_recipes(
            ensemble, rules, victim, t_d, args.permutations, args.seed,
            p_cap=args.p_cap, time_budget_s=args.time_budget or None,
            stats=stats)
        log.info("simulate %s/%s impact=%d: %d recipes for the attacker",
                 victim, profile.name, impact, len(recipes))
        run(MODE_NON_ADVERSARIAL, 0.0, impact, profile, [])
        for shift in args.shift:
            run(MODE_ADVERSARIAL, shift, impact, profile, recipes)

    _write_csv(_out_path(args, EPISODES_CSV), EPISODE_COLUMNS, episode_rows)
    _write_jsonl(_out_path(args, PLANS_JSONL), plan_lines)
    log.info("wrote %s and %s under %s", EPISODES_CSV, PLANS_JSONL, args.out_dir)
    return EXIT_OK


def cmd_patch(args) -> int:
    ensemble, thresholds = load_model(args.model)
    schema = ensemble.schema
    X, y = load_dataset(args.dataset, schema)
    maxima = compute_class_maxima(X, y)
    missing = set(ensemble.real_classes) - set(maxima)
    if missing:
        raise ValueError(f"dataset lacks rows for classes {sorted(missing)}")
    leaf_maxima = compute_leaf_maxima(ensemble, X) if args.leaf_maxima else None

    patched, records = essential_patch(ensemble, maxima, leaf_maxima=leaf_maxima)
    if not args.essential_only:
        if args.additional_features:
            extra = args.additional_features
        else:
            profile = _resolve_profile(args.attack, 1)
            extra = [name for name, _ in profile.features
                     if schema.features[schema.index_of(name)].unit == UNIT_PKT]
        patched, more = additional_patch(patched, maxima, extra,
                                         leaf_maxima=leaf_maxima)
        records += more
    save_model(_out_path(args, PATCHED_MODEL), patched, thresholds)
    _write_csv(_out_path(args, PATCH_REPORT_CSV),
               ["tree", "leaf", "feature", "threshold", "kind"],
               [[r.tree, r.leaf, r.feature, r.threshold, r.kind]
                for r in records])
    log.info("added %d guards -> %s", len(records), PATCHED_MODEL)

    classes = args.target_class or sorted(ensemble.real_classes)
    rows = []
    lines = []
    for target in classes:
        if target not in ensemble.real_classes:
            raise ValueError(f"unknown target class {target!r}")
        t_d = thresholds[target].t
        for impact in args.impact:
            profile = _resolve_profile(args.attack, impact)
            rules = build_target_rules(profile, schema)
            stats = SearchStats()
            recipes = audit_patched(
                patched, rules, target, t_d, args.permutations, args.seed,
                p_cap=args.p_cap, time_budget_s=args.time_budget or None,
                stats=stats)
            log.info("re-audit %s/%s impact=%d: %d recipes",
                     target, profile.name, impact, len(recipes))
            rows.append([target, profile.name, impact, args.permutations,
                         len(recipes), stats.recipes_found])
            for box in recipes:
                lines.append({"target_class": target, "attack": profile.name,
                              "impact": impact,
                              "recipe": box_to_json(box, schema)})
    _write_csv(_out_path(args, REAUDIT_CSV), AUDIT_COLUMNS, rows)
    _write_jsonl(_out_path(args, REAUDIT_RECIPES_JSONL), lines)
    log.info("wrote %s, %s, %s under %s", PATCH_REPORT_CSV, REAUDIT_CSV,
             REAUDIT_RECIPES_JSONL, args.out_dir)
    return EXIT_OK


def _read_csv(path: str) -> list[dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_report(args) -> int:
    # Unique recipes reachable within the first k permutations, from the
    # stored provenance of each deduplicated recipe.
    counts: dict[tuple[str, str, int], list[int]] = {}
    with open(args.recipes, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            key = (obj["target_class"], obj["attack"], int(obj["impact"]))
            counts.setdefault(key, []).append(
                int(obj["recipe"]["provenance"]["permutation"]))
    perm_rows = []
    for key in sorted(counts):
        firsts = counts[key]
        for k in args.permutation_grid:
            perm_rows.append([key[0], key[1], key[2], k,
                              sum(1 for p in firsts if p < k)])
    _write_csv(_out_path(args, "recipe_count_vs_permutations.csv"),
               ["target_class", "attack", "impact", "permutations",
                "unique_recipes"], perm_rows)

    episodes = _read_csv(args.episodes)
    det_rows = []
    groups: dict[tuple, list[dict]] = {}
    for row in episodes:
        groups.setdefault((row["victim"], row["attack"], int(row["impact"]),
                           row["mode"], float(row["shift"])), []).append(row)
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], k[3], k[4])):
        victim, attack, impact, mode, shift = key
        rows = groups[key]
        if mode == MODE_BENIGN:
            scored = rows
        else:
            scored = [r for r in rows
                      if int(r["attack_pkts"]) + int(r["overhead_pkts"]) > 0]
        hits = sum(r["detected"] == "True" for r in scored)
        rate = hits / len(scored) if scored else 0.0
        det_rows.append([victim, attack, impact, mode, shift,
                         len(scored), hits, rate])
    _write_csv(_out_path(args, "detection_rate_by_impact.csv"),
               ["victim", "attack", "impact", "mode", "shift",
                "epochs_considered", "detected", "detection_rate"], det_rows)

    shift_rows = []
    adv = [r for r in episodes if r["mode"] == MODE_ADVERSARIAL]
    sgroups: dict[tuple, list[dict]] = {}
    for row in adv:
        sgroups.setdefault((row["victim"], row["attack"], int(row["impact"]),
                            float(row["shift"])), []).append(row)
    for key in sorted(sgroups, key=lambda k: (k[0], k[1], k[2], k[3])):
        victim, attack, impact, shift = key
        launched = [r for r in sgroups[key] if r["recipe_selected"] == "True"]
        succeeded = sum(r["detected"] == "False" for r in launched)
        rate = succeeded / len(launched) if launched else 0.0
        shift_rows.append([victim, attack, impact, shift,
                           len(launched), succeeded, rate])
    _write_csv(_out_path(args, "time_shift_success.csv"),
               ["victim", "attack", "impact", "shift", "launched",
                "succeeded", "success_rate"], shift_rows)
    log.info("wrote report tables under %s", args.out_dir)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .datasets import build_corpus
    model = default_trace_model()
    X, y = build_corpus(model, args.epochs_per_class, args.seed)
    save_dataset(args.out, X, y, model.schema)
    log.info("wrote %d rows x %d features to %s", len(y), X.shape[1], args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forestaudit",
        description="Audit, attack-simulate, and patch voting tree ensembles "
                    "for IoT traffic inference.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-q", "--quiet", action="store_true",
                        help="suppress progress logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common_out = dict(default=_default_out_dir(),
                      help="output directory (default: FORESTAUDIT_OUT_DIR or .)")

    p = sub.add_parser("train", help="train a voting forest from a dataset CSV")
    p.add_argument("--dataset", required=True, help="training CSV (features + label)")
    p.add_argument("--out", required=True, help="model JSON output path")
    p.add_argument("--schema", help="schema JSON (default: builtin IoT flow schema)")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=12)
    p.add_argument("--min-leaf", type=int, default=4)
    p.add_argument("--bootstrap", type=float, default=0.8,
                   help="bootstrap sample fraction per tree")
    p.add_argument("--feature-subsample", type=_subsample, default=0.75,
                   help="'sqrt', 'all', a fraction, or an integer count per split")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("audit", help="search adversarial recipes against a model")
    p.add_argument("--model", required=True)
    p.add_argument("--target-class", type=_str_list,
                   help="comma list (default: every class)")
    p.add_argument("--attack", required=True,
                   help=f"builtin {sorted(BUILTIN_PROFILES)} or a profile JSON path")
    p.add_argument("--impact", type=_int_list, default=[100, 500, 1000],
                   help="comma list of attack packet counts per epoch")
    p.add_argument("--permutations", type=int, default=20)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--time-budget", type=float, default=60.0,
                   help="seconds per (class, impact) cell; 0 = unlimited")
    p.add_argument("--p-cap", type=int, default=10 ** 6,
                   help="packet-count cap for pair consistency scans")
    p.add_argument("--out-dir", **common_out)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("simulate",
                       help="replay attack episodes against the inference loop")
    p.add_argument("--model", required=True)
    p.add_argument("--victim", required=True, help="device class under attack")
    p.add_argument("--attack", required=True)
    p.add_argument("--impact", type=_int_list, default=[500])
    p.add_argument("--permutations", type=int, default=20)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--shift", type=_float_list, default=[0.0],
                   help="attacker clock offsets in seconds, comma list")
    p.add_argument("--epochs", type=int, default=35,
                   help="episode length in epochs")
    p.add_argument("--attack-epochs", type=_parse_epochs,
                   help="epoch spec like '12-22' (default: middle third)")
    p.add_argument("--trace", help="benign trace CSV (default: synthetic)")
    p.add_argument("--trace-seed", type=int, default=11,
                   help="seed for the synthetic benign trace")
    p.add_argument("--window", type=float, default=60.0,
                   help="epoch length in seconds for --trace files")
    p.add_argument("--time-budget", type=float, default=60.0)
    p.add_argument("--p-cap", type=int, default=10 ** 6)
    p.add_argument("--out-dir", **common_out)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("patch",
                       help="guard a model's leaves and re-audit the result")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True,
                   help="training CSV supplying per-class maxima")
    p.add_argument("--attack", required=True)
    p.add_argument("--impact", type=_int_list, default=[100, 500, 1000])
    p.add_argument("--target-class", type=_str_list)
    p.add_argument("--permutations", type=int, default=20)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--essential-only", action="store_true",
                   help="skip the additional (all-leaves) patches")
    p.add_argument("--additional-features", type=_str_list,
                   help="features for additional patching "
                        "(default: the attack's pkt features)")
    p.add_argument("--leaf-maxima", action="store_true",
                   help="tighten guards to per-leaf training maxima")
    p.add_argument("--time-budget", type=float, default=60.0)
    p.add_argument("--p-cap", type=int, default=10 ** 6)
    p.add_argument("--out-dir", **common_out)
    p.set_defaults(func=cmd_patch)

    p = sub.add_parser("report", help="summary tables from audit/simulate outputs")
    p.add_argument("--recipes", required=True, help="recipes.jsonl from audit")
    p.add_argument("--episodes", required=True, help="episodes.csv from simulate")
    p.add_argument("--permutation-grid", type=_int_list, default=[5, 10, 20])
    p.add_argument("--out-dir", **common_out)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="emit the builtin synthetic dataset as CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs-per-class", type=int, default=240)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, format="%(message)s",
                        level=logging.ERROR if args.quiet else logging.INFO)
    try:
        return args.func(args)
    except ModelFormatError as exc:
        log.error("error: %s", exc)
        return EXIT_IO
    except OSError as exc:
        log.error("error: %s", exc)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        log.error("error: %s", exc)
        return EXIT_VALIDATION
    except Exception as exc:  # pragma: no cover - invariant breaches
        log.error("internal error: %s: %s", type(exc).__name__, exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
