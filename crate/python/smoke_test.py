"""Smoke test for the plancode extension module.

Build and install first, e.g.
    pip install --no-build-isolation ./crates/python
then run
    python3 python/smoke_test.py
"""
import json
import os
import sys
import tempfile

import plancode


def retrieval(k):
    blocks = "".join(
        "<problem>\n<description>\nexemplar-%d\n</description>\n<code>\n"
        "```python\n# Step 1: read\n# Step 2: solve\npass\n```\n</code>\n</problem>\n" % i
        for i in range(1, k + 1)
    )
    return "<root>\n%s<algorithm>\nDirect\n</algorithm>\n<tutorial>\nJust do it.\n</tutorial>\n</root>\n" % blocks


def plan(conf):
    return "<plan>\n1. read\n2. solve\n</plan>\n<confidence>%s</confidence>\n" % conf


def code(src):
    return "```python\n%s\n```\n" % src


def main():
    p = plancode.Problem(
        "square",
        "Read n and print n squared.",
        sample_io=[("3\n", "9\n")],
        hidden_tests=[("4\n", "16\n"), ("-2\n", "4\n")],
    )
    assert plancode.validate_problem(p) == []
    assert plancode.Problem.from_json(p.to_json()).sample_io == [("3\n", "9\n")]

    backend = plancode.ScriptedBackend([
        retrieval(2),
        plan(80),
        plan(30),
        code("n = int(input())\nprint(n + n)"),
        code("n = int(input())\nprint(n * n)"),
    ])
    out = plancode.solve(p, plancode.RunConfig(k=2, t=1), backend)
    assert out.solved_on_samples, out
    assert out.agents == ["retrieval", "planning", "planning", "coding", "debugging"], out.agents
    assert backend.remaining == 0
    json.loads(out.to_json())

    verdicts = plancode.run_candidate(out.final_code, [("4\n", "16\n"), ("5\n", "0\n")])
    assert [v[1] for v in verdicts] == ["Pass", "WrongOutput"], verdicts

    assert plancode.sort_plans([40.0, 90.0, 90.0]) == [1, 2, 0]
    assert plancode.pass_at_k([[True], [False], [False], [True]], 1) == 0.5
    assert plancode.compare_output("5\n", "5   ")
    assert not plancode.compare_output("5\n", "6\n")

    mb = plancode.Problem(
        "m1", "Square a number.", exec_mode="function_call", entry_point="sq",
        hidden_tests=["assert sq(2) == 4", "assert sq(3) == 9", "assert sq(0) == 0"],
    )
    split = plancode.extract_mbpp_sample_io(mb, 7)
    assert len(split.sample_io) == 1 and len(split.hidden_tests) == 2
    assert split.to_json() == plancode.extract_mbpp_sample_io(mb, 7).to_json()

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "data.jsonl")
        with open(path, "w") as f:
            f.write(p.to_json() + "\n")
        loaded = plancode.load_dataset(path)
        assert [x.id for x in loaded] == ["square"]

    try:
        plancode.RunConfig(k=0)
    except ValueError:
        pass
    else:
        raise AssertionError("k=0 accepted")

    print("smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
