"""Raw vs bandpass mean pairwise correlation of zero-crack received signals."""
import argparse

from crackfusion.experiments import denoise_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--pairs", type=int, default=6)
    args = ap.parse_args()
    print(f"{'seed':>4}  {'raw':>8}  {'bandpass':>8}")
    for seed in range(args.seeds):
        raw, filt = denoise_trial(seed, args.pairs)
        print(f"{seed:>4}  {raw:8.4f}  {filt:8.4f}")


if __name__ == "__main__":
    main()
