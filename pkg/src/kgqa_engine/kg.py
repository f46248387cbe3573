"""Knowledge-graph access: SPARQL adapter and in-memory store.

Both adapters answer the same two questions -- ``neighbors(entity)`` and
``label(id)`` -- so the executor never knows which one it is talking to.
Neighbor lists are sorted by (relation, entity, direction) so candidate
ordering, and therefore whole traces, are reproducible.
"""

from __future__ import annotations

import re
import time
from enum import Enum
from typing import Protocol

import requests

from .errors import InvalidEntityId, KgUnavailable, MalformedResults, ParseError
from .triples import Direction

FREEBASE_PREFIX = "http://rdf.freebase.com/ns/"
FREEBASE_ID_PATTERN = r"[a-z]\.[0-9a-z_]+"
FREEBASE_LABEL_PROPERTY = "type.object.name"

Neighbor = tuple[str, str, Direction]  # (relation, other_entity, direction)


class GraphStore(Protocol):
    def neighbors(self, entity: str) -> list[Neighbor]: ...

    def label(self, entity_or_relation: str) -> str | None: ...


class SparqlTemplate(str, Enum):
    OUTGOING_EDGES = "outgoing_edges"
    INCOMING_EDGES = "incoming_edges"
    LABEL = "label"


def render_sparql(
    template: SparqlTemplate,
    entity: str,
    *,
    prefix: str = FREEBASE_PREFIX,
    id_pattern: str = FREEBASE_ID_PATTERN,
    label_property: str = FREEBASE_LABEL_PROPERTY,
    limit: int = 200,
) -> str:
    """Substitute an entity ID into a fixed query template.

    IDs are validated against the configured grammar before substitution;
    anything outside it is rejected, which doubles as injection protection.
    """
    if not re.fullmatch(id_pattern, entity):
        raise InvalidEntityId(f"entity id does not match grammar {id_pattern!r}: {entity!r}")
    header = f"PREFIX ns: <{prefix}>\n"
    if template is SparqlTemplate.OUTGOING_EDGES:
        body = f"SELECT ?relation ?tail WHERE {{ ns:{entity} ?relation ?tail }}"
    elif template is SparqlTemplate.INCOMING_EDGES:
        body = f"SELECT ?relation ?head WHERE {{ ?head ?relation ns:{entity} }}"
    elif template is SparqlTemplate.LABEL:
        body = f"SELECT ?label WHERE {{ ns:{entity} ns:{label_property} ?label }}"
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(template)
    return f"{header}{body} LIMIT {limit}"


def execute(
    endpoint: str,
    query: str,
    *,
    timeout: float = 30.0,
    retries: int = 2,
    backoff: float = 0.5,
) -> list[dict[str, str]]:
    """Run a query over the SPARQL 1.1 protocol; return variable->value rows.

    POSTs the query, asks for SPARQL JSON results, and retries transport
    failures and 5xx responses twice with exponential backoff before giving
    up with KgUnavailable.
    """
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        try:
            resp = requests.post(
                endpoint,
                data={"query": query},
                headers={"Accept": "application/sparql-results+json"},
                timeout=timeout,
            )
            if resp.status_code >= 500:
                raise KgUnavailable(f"endpoint returned HTTP {resp.status_code}")
            resp.raise_for_status()
            try:
                doc = resp.json()
                bindings = doc["results"]["bindings"]
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedResults(f"non-conforming SPARQL JSON results: {exc}") from exc
            rows = []
            for binding in bindings:
                if not isinstance(binding, dict):
                    raise MalformedResults("binding row is not an object")
                row = {}
                for var, cell in binding.items():
                    try:
                        row[var] = cell["value"]
                    except (KeyError, TypeError) as exc:
                        raise MalformedResults(f"binding cell missing value: {exc}") from exc
                rows.append(row)
            return rows
        except (requests.RequestException, KgUnavailable) as exc:
            last_error = exc
            if attempt < retries:
                time.sleep(backoff * (2**attempt))
    raise KgUnavailable(f"SPARQL endpoint unreachable after {retries + 1} attempts: {last_error}")


class SparqlGraphStore:
    """GraphStore over a remote SPARQL 1.1 endpoint."""

    def __init__(
        self,
        endpoint: str,
        *,
        prefix: str = FREEBASE_PREFIX,
        id_pattern: str = FREEBASE_ID_PATTERN,
        label_property: str = FREEBASE_LABEL_PROPERTY,
        limit: int = 200,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.5,
    ):
        self.endpoint = endpoint
        self.prefix = prefix
        self.id_pattern = id_pattern
        self.label_property = label_property
        self.limit = limit
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def _render(self, template: SparqlTemplate, entity: str) -> str:
        return render_sparql(
            template,
            entity,
            prefix=self.prefix,
            id_pattern=self.id_pattern,
            label_property=self.label_property,
            limit=self.limit,
        )

    def _execute(self, query: str) -> list[dict[str, str]]:
        return execute(
            self.endpoint,
            query,
            timeout=self.timeout,
            retries=self.retries,
            backoff=self.backoff,
        )

    def _localize(self, value: str) -> str:
        if value.startswith(self.prefix):
            return value[len(self.prefix):]
        return value

    def neighbors(self, entity: str) -> list[Neighbor]:
        out: list[Neighbor] = []
        for row in self._execute(self._render(SparqlTemplate.OUTGOING_EDGES, entity)):
            out.append((self._localize(row["relation"]), self._localize(row["tail"]), Direction.OUTGOING))
        for row in self._execute(self._render(SparqlTemplate.INCOMING_EDGES, entity)):
            out.append((self._localize(row["relation"]), self._localize(row["head"]), Direction.INCOMING))
        return sorted(set(out), key=lambda n: (n[0], n[1], n[2].value))

    def label(self, entity_or_relation: str) -> str | None:
        if not re.fullmatch(self.id_pattern, entity_or_relation):
            return None
        rows = self._execute(self._render(SparqlTemplate.LABEL, entity_or_relation))
        return rows[0]["label"] if rows else None


class InMemoryGraphStore:
    """Bidirectionally indexed triple store loaded from a TSV file."""

    def __init__(self):
        self._outgoing: dict[str, set[tuple[str, str]]] = {}
        self._incoming: dict[str, set[tuple[str, str]]] = {}
        self._labels: dict[str, str] = {}

    def add_triple(self, head: str, relation: str, tail: str) -> None:
        self._outgoing.setdefault(head, set()).add((relation, tail))
        self._incoming.setdefault(tail, set()).add((relation, head))

    def add_label(self, entity_or_relation: str, text: str) -> None:
        self._labels[entity_or_relation] = text

    def neighbors(self, entity: str) -> list[Neighbor]:
        out = [(r, t, Direction.OUTGOING) for r, t in self._outgoing.get(entity, ())]
        out += [(r, h, Direction.INCOMING) for r, h in self._incoming.get(entity, ())]
        return sorted(out, key=lambda n: (n[0], n[1], n[2].value))

    def label(self, entity_or_relation: str) -> str | None:
        return self._labels.get(entity_or_relation)

    def entity_with_label(self, text: str) -> str | None:
        """Reverse label lookup, used for backend-extracted topic entities."""
        wanted = text.strip().lower()
        for key, lab in sorted(self._labels.items()):
            if lab.strip().lower() == wanted:
                return key
        return None

    def entities(self) -> list[str]:
        return sorted(set(self._outgoing) | set(self._incoming))


def load_memory_store(path) -> InMemoryGraphStore:
    """Load a TSV triple file.

    Lines are either ``head<TAB>relation<TAB>tail`` or
    ``label<TAB>id<TAB>text``. Blank lines and ``#`` comments are skipped.
    """
    store = InMemoryGraphStore()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"line {lineno}: expected 3 tab-separated fields, got {len(parts)}")
            a, b, c = (p.strip() for p in parts)
            if not (a and b and c):
                raise ParseError(f"line {lineno}: empty field")
            if a == "label":
                store.add_label(b, c)
            else:
                store.add_triple(a, b, c)
    return store
