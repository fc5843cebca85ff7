#!/usr/bin/env python3
"""MSP/1 reference server: f(x) = sum(x), gradient = ones.

One JSON object per line on stdin, one reply per line on stdout. Failure
modes for protocol tests:
  --dim N            input dimension reported in meta (default 3)
  --misbehave-id     reply with id+1 (id echo violation)
  --die-on-predict   exit without replying to the first predict
  --error-on-gradient  reply {"id":..,"error":..} to gradient requests
  --no-gradient      advertise gradient: false
"""
import argparse
import json
import sys


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--dim", type=int, default=3)
    ap.add_argument("--misbehave-id", action="store_true")
    ap.add_argument("--die-on-predict", action="store_true")
    ap.add_argument("--error-on-gradient", action="store_true")
    ap.add_argument("--no-gradient", action="store_true")
    args = ap.parse_args()

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        rid = req["id"] + 1 if args.misbehave_id else req["id"]
        op = req.get("op")
        if op == "meta":
            rep = {"id": rid, "d": args.dim, "name": "echo_sum",
                   "gradient": not args.no_gradient}
        elif op == "predict":
            if args.die_on_predict:
                sys.exit(0)
            rep = {"id": rid, "scores": [float(sum(x)) for x in req["inputs"]]}
        elif op == "gradient":
            if args.error_on_gradient:
                rep = {"id": rid, "error": "gradient disabled"}
            else:
                rep = {"id": rid, "grad": [1.0] * len(req["input"])}
        else:
            rep = {"id": rid, "error": f"unknown op {op!r}"}
        sys.stdout.write(json.dumps(rep) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
