"""Human-readable rendering of workload reports.

Reports render through a plain ``{{name}}`` substitution by default. Passing a
Jinja2 environment enables full templates, which also receive the report
dicts as ``reports``.
"""
import re
from typing import Any, Dict, List, Optional, Tuple

# This Environment import is only for type checking purpose,
# and only relevant if rendering reports with Jinja
try:
    from jinja2 import Environment
except ImportError:  # pragma: no cover
    pass

from typing_extensions import TypedDict

from .simharness import WorkloadReport, report_to_json

__all__ = [
    "REPORT_TEMPLATE",
    "TABLE_COLUMNS",
    "ReportConfig",
    "process_var",
    "simple_renderer",
    "check_jinja",
    "render_table",
    "render_report_sync",
]

REPORT_TEMPLATE = """{{title}}

{{table}}

{{footer}}
"""

TABLE_COLUMNS = (
    ("arm", 12),
    ("retry", 13),
    ("issued", 7),
    ("ok", 7),
    ("failed", 7),
    ("fail %", 7),
    ("mean ms", 9),
    ("p50", 9),
    ("p95", 9),
    ("p99", 9),
)


class ReportConfig(TypedDict, total=False):
    """Report rendering options.

    Has the following attributes:

    title
        The first line of the report. Defaults to "shardmap report".
    template
        A custom template source; defaults to REPORT_TEMPLATE.
    jinja_env
        A Jinja2 Environment used to render the template instead of the
        built-in simple renderer.
    """

    title: str
    template: str
    jinja_env: Optional["Environment"]


def process_var(template: str, name: str, value: Any) -> str:
    pattern = r"{{\s*" + re.escape(name) + r"\s*}}"
    value = str(value).replace("\\", r"\\")
    return re.sub(pattern, value, template)


def simple_renderer(template: str, **values: Any) -> str:
    for name in ("title", "table", "footer"):
        template = process_var(template, name, values.get(name, ""))
    return template


def check_jinja(jinja_env: Any) -> None:
    try:
        from jinja2 import Environment
    except ImportError:  # pragma: no cover
        raise RuntimeError(
            "Attempt to set 'jinja_env' to a value other than None while Jinja2 is not installed.\n"
            "Please install Jinja2 to render reports with Jinja2.\n"
            "Otherwise set 'jinja_env' to None to use the simple regex renderer."
        )

    if not isinstance(jinja_env, Environment):
        raise TypeError("'jinja_env' has to be of type jinja2.Environment.")


def _arm(report: WorkloadReport) -> str:
    if report.strategy in ("static", "group"):
        return f"{report.strategy}({report.shards})"
    return report.strategy


def render_table(reports: List[WorkloadReport]) -> str:
    """Lay out one fixed-width row per report under a header row."""
    header = " ".join(name.rjust(width) for name, width in TABLE_COLUMNS)
    lines = [header, "-" * len(header)]
    for report in reports:
        if report.error:
            lines.append(f"{_arm(report):>12} {report.retry:>13} error: {report.error}")
            continue
        cells = (
            _arm(report),
            report.retry,
            report.issued,
            report.succeeded,
            report.failed,
            f"{100 * report.failure_rate:.1f}",
            f"{report.mean_tx_time:.1f}",
            f"{report.p50:.1f}",
            f"{report.p95:.1f}",
            f"{report.p99:.1f}",
        )
        lines.append(
            " ".join(
                str(cell).rjust(width) for cell, (_, width) in zip(cells, TABLE_COLUMNS)
            )
        )
    return "\n".join(lines)


def _render_report(
    reports: List[WorkloadReport], config: ReportConfig
) -> Tuple[str, Dict[str, Any]]:
    template = config.get("template") or REPORT_TEMPLATE
    seeds = sorted({report.seed for report in reports})
    template_vars: Dict[str, Any] = {
        "title": config.get("title") or "shardmap report",
        "table": render_table(reports),
        "footer": "times in virtual ms over successful votes, seed "
        + ",".join(str(seed) for seed in seeds),
        "reports": [report_to_json(report) for report in reports],
    }
    return template, template_vars


def render_report_sync(
    reports: List[WorkloadReport], config: Optional[ReportConfig] = None
) -> str:
    template, template_vars = _render_report(reports, config or ReportConfig())
    jinja_env = (config or {}).get("jinja_env")

    if jinja_env:
        check_jinja(jinja_env)
        source = jinja_env.from_string(template).render(**template_vars)
    else:
        source = simple_renderer(template, **template_vars)
    return source
