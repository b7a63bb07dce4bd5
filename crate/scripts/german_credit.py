#!/usr/bin/env python3
"""Convert UCI german.data-numeric to the CSV the logistic model reads.

The source is whitespace separated: 24 numeric covariates, then the class
(1 = good credit, 2 = bad). Output is comma separated with a header, the
covariates as given and y = class - 1, so y = 1 marks bad credit. The model
standardizes every covariate itself.

    python3 scripts/german_credit.py german.data-numeric > german.csv
"""

import csv
import sys


def main(argv):
    if len(argv) != 2:
        sys.exit(f"usage: {argv[0]} german.data-numeric > german.csv")
    out = csv.writer(sys.stdout, lineterminator="\n")
    width = None
    with open(argv[1]) as src:
        for n, line in enumerate(src, 1):
            fields = line.split()
            if not fields:
                continue
            if width is None:
                width = len(fields)
                out.writerow([f"x{j}" for j in range(1, width)] + ["y"])
            if len(fields) != width:
                sys.exit(f"line {n}: expected {width} fields, found {len(fields)}")
            label = int(fields[-1])
            if label not in (1, 2):
                sys.exit(f"line {n}: class {label} is not 1 or 2")
            out.writerow(fields[:-1] + [label - 1])


if __name__ == "__main__":
    main(sys.argv)
