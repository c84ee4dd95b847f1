"""Finite-difference gradient check over seeds, sync and async, float64."""
import argparse

from selfrep_nca.gradcheck import gradcheck, random_instance
from selfrep_nca.rule import UpdateMode

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("--instances", type=int, default=20)
parser.add_argument("--size", type=int, default=8)
parser.add_argument("--steps", type=int, default=4)
parser.add_argument("--hidden", type=int, default=8)
args = parser.parse_args()

for name, mode in (("async", UpdateMode()), ("sync", UpdateMode.sync())):
    reports = [gradcheck(random_instance(s, args.size, args.steps, args.hidden, mode=mode))
               for s in range(args.instances)]
    worst = min(r.pass_fraction for r in reports)
    print(f"{name}: worst pass fraction {100 * worst:.2f}%, max rel err {max(r.max_error for r in reports):.2e}")
