#!/usr/bin/env python3
"""Epochs to reach a mean terminal reward, adaptive versus terminal-only rewards, over seeds."""

import argparse
import statistics

from tkgr.toy import toy_config, toy_data, train_toy


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--target", type=float, default=0.9)
    parser.add_argument("--max-epochs", type=int, default=200)
    parser.add_argument("--full", action="store_true",
                        help="run terminal-only seeds to --max-epochs instead of the adaptive median")
    args = parser.parse_args()

    _, ds = toy_data(seed=0)

    def epochs(mode, cap):
        out = []
        for seed in range(args.seeds):
            run = train_toy(ds, toy_config(ds, seed=seed, reward_mode=mode), cap, args.target)
            print(f"{mode:<14} seed {seed}: reached at {run.reached_at} "
                  f"(last mean terminal {run.curve[-1]:.3f}, {run.seconds:.0f}s)", flush=True)
            out.append(float("inf") if run.reached_at is None else run.reached_at)
        return out

    adaptive = epochs("adaptive", args.max_epochs)
    m_a = statistics.median(adaptive)
    cap = args.max_epochs if args.full or m_a == float("inf") else int(m_a)
    terminal = epochs("terminal-only", cap)
    m_t = statistics.median(terminal)
    print(f"median epochs to {args.target}: adaptive {m_a:g}, terminal-only "
          f"{m_t:g}{' (censored at %d)' % cap if m_t == float('inf') else ''}")


if __name__ == "__main__":
    main()
