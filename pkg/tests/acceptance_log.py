"""Collects one verdict line per acceptance criterion for the terminal summary."""

RESULTS: dict[int, str] = {}


def record(number: int, passed: bool | None, detail: str) -> None:
    verdict = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
    RESULTS[number] = f"criterion {number:2d}: {verdict}  {detail}"
    print(RESULTS[number])
