"""Fixtures and the acceptance-criteria terminal summary."""
from __future__ import annotations

import pytest

from support import toy_pair_spec, toy_tail_spec

@pytest.fixture
def tail_spec():
    return toy_tail_spec()


@pytest.fixture
def pair_spec():
    return toy_pair_spec()


# ----------------------------------------------------- acceptance reporting

ACCEPTANCE_LABELS = {
    "test_criterion_grammar_safety": "grammar safety",
    "test_criterion_beam_oracle": "beam oracle",
    "test_criterion_diverse_beam_degeneracy": "diverse-beam degeneracy",
    "test_criterion_rerank_filter_semantics": "rerank/filter semantics",
    "test_criterion_conversion_fidelity": "conversion fidelity",
    "test_criterion_conversion_full_dataset": "conversion fidelity (full dataset, env-gated)",
    "test_criterion_metrics_oracle": "metrics oracle",
    "test_criterion_agreement_statistic": "agreement statistic",
    "test_criterion_consolidation_graph": "consolidation and graph",
    "test_criterion_determinism": "pipeline determinism",
    "test_criterion_protocol_conformance": "protocol conformance (scoring server)",
}

_STATUS_BY_OUTCOME = {"passed": "PASS", "failed": "FAIL", "error": "FAIL", "skipped": "SKIPPED"}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = {}
    for outcome, status in _STATUS_BY_OUTCOME.items():
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            name = nodeid.split("::")[-1].split("[")[0]
            if name in ACCEPTANCE_LABELS:
                # a FAIL from any phase outranks earlier statuses
                prior = results.get(name)
                results[name] = "FAIL" if "FAIL" in (prior, status) else status
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, label in ACCEPTANCE_LABELS.items():
        if name in results:
            terminalreporter.write_line(f"{results[name]:7s} {label}")
