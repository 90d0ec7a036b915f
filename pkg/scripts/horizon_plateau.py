"""Estimate each bundled tail event at the configured horizon and at twice it."""
import argparse

from mppineq.cli import build_model, bundled_configs, load_config
from mppineq.mc import TailEvent, estimate_tails


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--configs", nargs="+", default=None)
    p.add_argument("--n-paths", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args(argv)
    print("config,label,horizon,p_hat,p_hat_doubled,se")
    for name in args.configs or bundled_configs():
        cfg = load_config(name)
        tails = [c for c in cfg.get("checks", []) if c["type"] == "tail"]
        if not tails:
            continue
        model, w = build_model(cfg)
        h = cfg["engine"].get("horizon", 10.0)
        for c in tails:
            ev = dict(c["event"])
            ev.setdefault("horizon", h)
            base = TailEvent(**ev)
            double = TailEvent(**{**ev, "horizon": 2 * base.horizon})
            r1, r2 = estimate_tails(model, w, [base, double], args.n_paths, args.seed,
                                    bounds=[c.get("bound")] * 2, check_floor=False)
            print(f"{name},{c.get('label', '')},{base.horizon},{r1.p_hat:.5f},{r2.p_hat:.5f},{r2.se:.5f}")


if __name__ == "__main__":
    main()
