# SPDX-License-Identifier: GPL-3.0-only

import json
import os
from typing import Any, Dict, List, Optional, Set, Tuple

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader, StrictUndefined, TemplateNotFound, meta

from embedding import DelayMatrix
from exceptions import ConfigError
from logutils import get_logger
from timeseries import SeriesPanel, write_csv
from utils import get_env_var

logger = get_logger(__name__)

DEFAULT_TEMPLATE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "report_templates")


def _to_builtin(value: Any) -> Any:
    """JSON fallback for numpy scalars and arrays."""
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


class ReportManager:
    """Writes a command's output files and renders its text summary."""

    def __init__(self, output_dir: str, template_dir: Optional[str] = None):
        self.output_dir = output_dir
        self.template_dir = template_dir or get_env_var("REPORT_TEMPLATE_DIR", DEFAULT_TEMPLATE_DIR)
        self.jinja_env = Environment(
            loader=FileSystemLoader(self.template_dir),
            autoescape=False,
            keep_trailing_newline=True,
            undefined=StrictUndefined,
        )
        self.written: List[str] = []
        os.makedirs(self.output_dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def _record(self, name: str) -> str:
        path = self.path(name)
        self.written.append(name)
        logger.info("Wrote %s", path)
        return path

    def write_frame(self, frame: pd.DataFrame, name: str) -> str:
        """Write a table with 12 significant digits and Unix line endings."""
        frame.to_csv(
            self.path(name), index=False, float_format="%.12g", na_rep="", lineterminator="\n"
        )
        return self._record(name)

    def write_panel(self, panel: SeriesPanel, name: str) -> str:
        write_csv(panel, self.path(name))
        return self._record(name)

    def write_delay_matrix(self, matrix: DelayMatrix, name: str) -> str:
        return self.write_frame(matrix.to_frame(), name)

    def write_json(self, data: Dict[str, Any], name: str) -> str:
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as f:
            json.dump(data, f, indent=2, sort_keys=True, default=_to_builtin)
            f.write("\n")
        return self._record(name)

    def get_template_variables(self, template_name: str) -> Tuple[bool, Set[str]]:
        """Extract all variable names used in a summary template."""
        try:
            template_path = os.path.join(self.template_dir, f"{template_name}.txt")
            with open(template_path, "r", encoding="utf-8") as f:
                template_content = f.read()

            ast = self.jinja_env.parse(template_content)
            variables = meta.find_undeclared_variables(ast)
            logger.debug("Found variables in template %s: %s", template_name, variables)
            return True, variables
        except FileNotFoundError:
            return False, {f"Template {template_name} not found"}

    def validate_template_variables(
        self, template_name: str, substitutions: Dict[str, Any]
    ) -> Tuple[bool, str]:
        """Validate that all required template variables are provided."""
        extraction_success, required_variables = self.get_template_variables(template_name)
        if not extraction_success:
            error_msg = required_variables.pop()
            logger.error(error_msg)
            return False, error_msg

        missing_variables = sorted(required_variables - set(substitutions))
        if missing_variables:
            logger.warning(
                "Template %s missing required variables: %s", template_name, missing_variables
            )
            return False, f"Missing required template variables: {', '.join(missing_variables)}"
        return True, ""

    def render_summary(self, template_name: str, substitutions: Dict[str, Any]) -> str:
        is_valid, error_msg = self.validate_template_variables(template_name, substitutions)
        if not is_valid:
            raise ConfigError(error_msg, key="REPORT_TEMPLATE_DIR")
        try:
            template = self.jinja_env.get_template(f"{template_name}.txt")
        except TemplateNotFound:
            logger.error("Template not found: %s.txt", template_name)
            raise ConfigError(f"Template not found: {template_name}.txt") from None
        return template.render(substitutions)

    def write_summary(self, template_name: str, substitutions: Dict[str, Any], name: str = "summary.txt") -> str:
        text = self.render_summary(template_name, substitutions)
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        return self._record(name)
