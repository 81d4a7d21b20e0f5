"""Client for a Polygon-style paginated REST feed.

Endpoints::

    GET {base}/v3/trades/{id}?from=<ns>&to=<ns>
    GET {base}/v3/quotes/{id}?from=<ns>&to=<ns>

Each page is a JSON object ``{"results": [...], "next_url": <url or null>}``
whose result objects use the same field names as the CSV schemas. Pages are
followed through ``next_url`` until it is absent or null.
"""

import json
import logging

import requests

from ..errors import DataError
from .parsing import QUOTES, TRADES, parse_stream

logger = logging.getLogger(__name__)


class RestMarketData:
    def __init__(self, base_url, api_key=None, *, auth_header="Authorization", auth_scheme="Bearer",
                 session=None, timeout=10.0, max_pages=10_000):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.auth_header = auth_header
        self.auth_scheme = auth_scheme
        self.session = session or requests.Session()
        self.timeout = timeout
        self.max_pages = max_pages

    def _headers(self):
        if self.api_key is None:
            return {}
        value = f"{self.auth_scheme} {self.api_key}" if self.auth_scheme else self.api_key
        return {self.auth_header: value}

    def _pages(self, url, params):
        pages = 0
        while url:
            if pages >= self.max_pages:
                raise DataError(f"more than {self.max_pages} pages from {self.base_url}")
            resp = self.session.get(url, params=params, headers=self._headers(), timeout=self.timeout)
            resp.raise_for_status()
            try:
                body = resp.json()
            except ValueError as exc:
                raise DataError(f"page {pages + 1} is not JSON: {exc}") from exc
            results = body.get("results") or []
            logger.debug("page %d from %s: %d records", pages + 1, url, len(results))
            yield results
            url, params = body.get("next_url"), None
            pages += 1

    def _fetch(self, kind, schema, instrument_id, start_ns, end_ns):
        url = f"{self.base_url}/v3/{kind}/{instrument_id}"
        lines = []
        for page in self._pages(url, {"from": start_ns, "to": end_ns}):
            for row in page:
                row = dict(row)
                row.setdefault("instrument_id", instrument_id)
                lines.append(json.dumps(row))
        # line numbers in any MalformedRow are 1-based positions across all pages
        return parse_stream("\n".join(lines).encode(), schema, fmt="jsonl").records

    def trades(self, instrument_id, start_ns, end_ns):
        return self._fetch("trades", TRADES, instrument_id, start_ns, end_ns)

    def quotes(self, instrument_id, start_ns, end_ns):
        return self._fetch("quotes", QUOTES, instrument_id, start_ns, end_ns)
