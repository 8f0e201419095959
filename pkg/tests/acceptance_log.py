"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

from contextlib import contextmanager

RESULTS: dict[int, str] = {}


class Detail:
    text = ""


@contextmanager
def criterion(number: int, title: str):
    detail = Detail()
    try:
        yield detail
    except BaseException:
        RESULTS[number] = f"FAIL criterion {number}: {title} {detail.text}".rstrip()
        print(RESULTS[number])
        raise
    RESULTS[number] = f"PASS criterion {number}: {title} {detail.text}".rstrip()
    print(RESULTS[number])
