"""!@file spinner.py
@brief Rate-limited one-line progress display for long training runs and file scans.
@version 0.1.0
@date_created 2025-02-26
@date_modified 2025-03-28
@author Leland Green
@license MIT
"""
import sys
import time
from datetime import datetime


class Spinner:
    def __init__(self, message=" {time} {count} ", format_string="%Y.%m.%d %H:%M:%S", limit=0.1, stream=None,
                 enabled=True):
        """
        A spinning marker next to a status message that is redrawn in place at most once per `limit` seconds.

        The message may contain the placeholders {time} (current time in `format_string`) and {count} (number of
        redraws so far); any other keyword passed to `spin` fills the placeholder of the same name, e.g.
        Spinner("iter {iter} objective {objective:.4f}").spin(iter=10, objective=0.25).

        Args:
            message (str): Default message template.
            format_string (str): strftime format for {time}. Falls back to "%Y.%m.%d %H:%M:%S" when invalid.
            limit (float): Minimum number of seconds between two redraws. 0 redraws on every call.
            stream: Where to draw, sys.stderr by default so that stdout stays parseable.
            enabled (bool): A disabled spinner accepts every call and draws nothing.
        """
        self.max_len = 0
        self.last_update = float("-inf")
        self.spinner_states = ['|', '/', '-', '\\']
        self.current_state = 0
        self.message = message
        self.count = 0
        self.limit = limit
        self.stream = stream if stream is not None else sys.stderr
        self.enabled = enabled
        try:
            datetime.now().strftime(format_string)
        except ValueError:
            format_string = "%Y.%m.%d %H:%M:%S"
        self.format_string = format_string

    def spin(self, message="", **fields):
        """
        Redraws the line if at least `limit` seconds passed since the previous redraw.

        Args:
            message (str): Template to draw instead of the default one.
            **fields: Values for named placeholders in the template.
        Returns:
            bool: True when the line was redrawn.
        """
        now = time.monotonic()
        if now - self.last_update < self.limit:
            return False
        self.last_update = now
        self.print_it(message, **fields)
        return True

    def format(self, message="", **fields):
        template = message or self.message
        self.count += 1
        try:
            return template.format(time=datetime.now().strftime(self.format_string), count=self.count, **fields)
        except (KeyError, IndexError, ValueError):
            return template

    def print_it(self, message="", end='\r', **fields):
        """Draws the line unconditionally; end='\\n' leaves it on screen."""
        if not self.enabled:
            return
        text = self.format(message, **fields)
        if not text.endswith(" "):
            text += " "
        self.current_state = (self.current_state + 1) % len(self.spinner_states)
        if len(text) < self.max_len:
            text += " " * (self.max_len - len(text))
        self.max_len = len(text)
        marker = "" if end == "\n" else self.spinner_states[self.current_state]
        print(f"{text}{marker}", end=end, file=self.stream, flush=True)

    def done(self, message="", **fields):
        self.print_it(message, end="\n", **fields)
