"""Drive the whole workflow through the command line interface.

Runs gen-data, train, eval, and spectrum as subprocesses with tiny sizes,
the same way a shell session would, and shows where each artifact lands.
Every run directory contains a resolved_config.txt that can be fed back to
`dpno train --config` to reproduce the run byte for byte.
"""

import pathlib
import subprocess
import sys
import tempfile


def run(args):
    print(f"$ {' '.join(args)}")
    proc = subprocess.run([sys.executable, "-m", "dpno", *args],
                          capture_output=True, text=True)
    sys.stdout.write(proc.stdout)
    if proc.returncode != 0:
        sys.stdout.write(proc.stderr)
        raise SystemExit(f"command failed with exit code {proc.returncode}")
    print()


def main():
    with tempfile.TemporaryDirectory() as tmp:
        root = pathlib.Path(tmp)
        data = str(root / "darcy16")
        out = str(root / "run")

        run(["gen-data", "--task", "darcy", "--n-train", "12", "--n-test", "4",
             "--resolution", "16", "--seed", "3", "--out", data])

        cfg = root / "train.cfg"
        cfg.write_text("train.epochs = 4\ntrain.batch_size = 4\n"
                       "model.width = 8\nmodel.levels = 1\nmodel.modes_a = 4\n")
        run(["train", "--config", str(cfg), "--data", data, "--out", out])

        run(["eval", "--checkpoint", f"{out}/checkpoints/epoch_00004",
             "--data", data])

        run(["spectrum", "--data", data, "--out", str(root / "spec")])

        print("artifacts under the run directory:")
        for p in sorted(pathlib.Path(out).rglob("*")):
            if p.is_file():
                print(f"  {p.relative_to(root)}")


if __name__ == "__main__":
    main()
