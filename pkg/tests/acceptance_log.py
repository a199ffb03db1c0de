"""Collects one verdict line per acceptance criterion for the terminal summary."""
RESULTS = []


def report(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    return passed
