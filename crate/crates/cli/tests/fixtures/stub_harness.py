"""Minimal function-call harness used by the test suite.

Reads {"code", "test", "entry_point"} as JSON on stdin, runs the code and then
the test in one namespace, and prints a single JSON verdict record as the last
line of stdout. Anything the candidate prints goes to stderr.
"""
import contextlib
import json
import sys
import traceback


def verdict(kind, detail=""):
    sys.__stdout__.write(json.dumps({"verdict": kind, "detail": detail}) + "\n")
    sys.__stdout__.flush()


def main():
    try:
        req = json.loads(sys.stdin.read())
        code, test = req["code"], req["test"]
        entry = req.get("entry_point")
    except Exception as e:  # malformed request
        verdict("harness_error", "bad request: %s" % e)
        return
    ns = {"__name__": "__candidate__"}
    with contextlib.redirect_stdout(sys.stderr):
        try:
            exec(compile(code, "candidate.py", "exec"), ns)
        except BaseException:
            verdict("runtime_error", traceback.format_exc(limit=3))
            return
        if entry and entry not in ns:
            verdict("harness_error", "entry point %r not defined" % entry)
            return
        try:
            exec(compile(test, "test.py", "exec"), ns)
        except AssertionError:
            verdict("assertion_failed", "failed: %s" % test.strip())
            return
        except BaseException:
            verdict("runtime_error", traceback.format_exc(limit=3))
            return
    verdict("pass")


if __name__ == "__main__":
    main()
