"""Regenerate the bundled scenario fixtures.

Usage::

    python scripts/generate_fixtures.py            # rewrite config.toml + expected.txt
    python scripts/generate_fixtures.py --check    # fail if the committed files differ
    python scripts/generate_fixtures.py --spread supplement-s1   # per-metric sampling spread
"""

from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np

from ramanmem.config import dumps_config
from ramanmem.scenarios import ScenarioFixture, format_expected, fixture_root, run_pipeline
from ramanmem.scenarios.tuning import BUILDERS, build_fixtures


def render(spec) -> dict[str, str]:
    return {
        "config.toml": dumps_config(spec.config),
        "expected.txt": format_expected(spec.expected, spec.pipeline, spec.exact),
    }


def spread(name: str, seeds: int) -> None:
    spec = BUILDERS[name]()
    f = ScenarioFixture(spec.name, spec.config, spec.expected, spec.pipeline, spec.exact)
    values: dict[str, list[float]] = {}
    for s in range(seeds):
        out = run_pipeline(f.config.replace(seed=s), f.pipeline, names=list(f.expected), n_resamples=2)
        for k, (v, _) in out.items():
            values.setdefault(k, []).append(v)
    for k, v in values.items():
        v = np.array(v)
        print(f"{k:<22} mean {v.mean():.6g}  std {v.std(ddof=1):.3g}  3*std {3 * v.std(ddof=1):.3g}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--check", action="store_true")
    ap.add_argument("--spread", metavar="NAME")
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args(argv)
    warnings.simplefilter("ignore")
    if args.spread:
        spread(args.spread, args.seeds)
        return 0
    root = fixture_root()
    stale = []
    for name, spec in build_fixtures().items():
        d = root / name
        for fname, text in render(spec).items():
            path = d / fname
            if args.check:
                if not path.is_file() or path.read_text() != text:
                    stale.append(str(path))
            else:
                d.mkdir(parents=True, exist_ok=True)
                path.write_text(text)
                print(f"wrote {path}")
    if stale:
        print("stale fixtures:\n  " + "\n  ".join(stale), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
