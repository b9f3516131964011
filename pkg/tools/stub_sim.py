#!/usr/bin/env python3
"""Stand-in simulator: checks the source files exist and reports success.

Used to record testbench fixtures and to exercise the simulator adapter
where no real Verilog simulator is installed.
"""
import os
import sys

def main() -> int:
    files = sys.argv[2:]
    for path in files:
        if not os.path.exists(path):
            print(f"missing source file: {path}", file=sys.stderr)
            return 1
    print("ALL TESTS PASSED")
    return 0

if __name__ == "__main__":
    raise SystemExit(main())
