"""
OpenAlex REST API client.

Handles OpenAlex-specific:
- Polite pool access (mailto query parameter and User-Agent)
- Single-work lookups by DOI or OpenAlex ID
- Batched lookups through the openalex_id OR-filter (50 IDs per request)
- Paged list queries used to harvest cohorts
- Client-side rate limiting, jittered exponential backoff on 429/5xx
- Write-through persistent caching of every decoded work
"""

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple
from urllib.parse import quote

import requests
from tenacity import (
    Retrying,
    before_sleep_log,
    retry_if_exception_type,
    stop_after_attempt,
    wait_random_exponential,
)

from src.errors import (
    DecodeError,
    DegenerateNeighborhoodError,
    TransportError,
    UnknownWorkError,
    UsageError,
)
from src.services.eccentricity import ReferenceNeighborhood
from src.services.work_cache import WorkCache
from src.services.work_record import WorkRecord, normalize_openalex_id, parse_ref

logger = logging.getLogger(__name__)

OPENALEX_BASE_URL = "https://api.openalex.org"
MAX_IDS_PER_FILTER = 50
MAX_PER_PAGE = 200
SELECT_FIELDS = ",".join([
    "id", "doi", "title", "publication_year", "cited_by_count", "fwci",
    "authorships", "primary_topic", "primary_location", "type", "referenced_works",
])


@dataclass
class OpenAlexConfig:
    """OpenAlex client configuration."""

    mailto: Optional[str] = None
    base_url: str = OPENALEX_BASE_URL
    requests_per_second: float = 5.0
    max_retries: int = 4
    backoff_multiplier: float = 0.5
    backoff_max: float = 30.0
    timeout: float = 30.0
    parallelism: int = 4
    offline: bool = False

    def __post_init__(self):
        if self.requests_per_second <= 0:
            raise UsageError("requests_per_second must be positive")
        if self.parallelism < 1:
            raise UsageError("parallelism must be at least 1")
        if self.max_retries < 0:
            raise UsageError("max_retries cannot be negative")


class RateLimiter:
    """Thread-safe limiter spacing request starts at least 1/rps seconds apart."""

    def __init__(self, requests_per_second: float,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.min_interval = 1.0 / requests_per_second
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_slot: Optional[float] = None

    def wait(self) -> float:
        """
        Block until the next request may start.

        Returns:
            float: Clock reading at which the request was released
        """
        with self._lock:
            now = self._clock()
            if self._next_slot is not None and now < self._next_slot:
                self._sleep(self._next_slot - now)
                now = max(self._clock(), self._next_slot)
            self._next_slot = now + self.min_interval
            return now


class RetryableStatusError(Exception):
    """HTTP 429 or 5xx; worth retrying after a backoff."""

    def __init__(self, status_code: int, url: str):
        super().__init__(f"HTTP {status_code} for {url}")
        self.status_code = status_code


@dataclass
class BatchResult:
    """Records found by a batch lookup plus the IDs that could not be resolved."""

    records: List[WorkRecord] = field(default_factory=list)
    missing: List[str] = field(default_factory=list)


def _payload_ref(item: Any) -> str:
    if isinstance(item, dict):
        for key in ("id", "doi", "title"):
            if item.get(key):
                return str(item[key])
    return "?"


class OpenAlexClient:
    """Cached, rate-limited OpenAlex works client."""

    def __init__(self, config: OpenAlexConfig, cache: WorkCache,
                 session: Optional[requests.Session] = None,
                 rate_limiter: Optional[RateLimiter] = None):
        """
        Initialize the client.

        Args:
            config: Client configuration
            cache: Persistent work cache (shared across threads)
            session: HTTP session; a new requests.Session when omitted
            rate_limiter: Limiter to use instead of one built from the config
        """
        self.config = config
        self.cache = cache
        self.session = session if session is not None else requests.Session()
        self.rate_limiter = rate_limiter or RateLimiter(config.requests_per_second)
        self.request_count = 0
        self._count_lock = threading.Lock()
        # caps in-flight requests across every thread sharing this client
        self._slots = threading.BoundedSemaphore(config.parallelism)
        self._setup_session()

    def _setup_session(self):
        """Identify ourselves for the polite pool."""
        user_agent = "ke-toolkit/0.1"
        if self.config.mailto:
            user_agent += f" (mailto:{self.config.mailto})"
        self.session.headers.update({"User-Agent": user_agent, "Accept": "application/json"})

        if self.config.offline:
            logger.info("OpenAlex client in offline mode; only cached works are available")
        elif self.config.mailto:
            logger.info(f"OpenAlex client using polite pool (mailto: {self.config.mailto})")

    def _require_network(self):
        if self.config.offline:
            raise UsageError("network access is disabled in offline mode")
        if not self.config.mailto:
            raise UsageError(
                "live OpenAlex requests need a contact email (--mailto or KE_MAILTO)"
            )

    def _retrying(self) -> Retrying:
        return Retrying(
            stop=stop_after_attempt(self.config.max_retries + 1),
            wait=wait_random_exponential(
                multiplier=self.config.backoff_multiplier, max=self.config.backoff_max
            ),
            retry=retry_if_exception_type(
                (RetryableStatusError, requests.ConnectionError, requests.Timeout)
            ),
            before_sleep=before_sleep_log(logger, logging.WARNING),
            reraise=True,
        )

    def _request(self, url: str, params: Dict[str, Any]) -> Dict[str, Any]:
        with self._slots:
            self.rate_limiter.wait()
            with self._count_lock:
                self.request_count += 1
            logger.debug(f"GET {url} {params}")
            response = self.session.get(url, params=params, timeout=self.config.timeout)

        status = response.status_code
        if status == 404:
            raise UnknownWorkError(f"OpenAlex has no work at {url}")
        if status == 429 or status >= 500:
            raise RetryableStatusError(status, url)
        if status >= 400:
            raise TransportError(f"HTTP {status} for {url}")

        try:
            return response.json()
        except ValueError as e:
            raise DecodeError(f"response from {url} is not JSON: {e}") from e

    def _get_json(self, path: str, params: Dict[str, Any]) -> Dict[str, Any]:
        self._require_network()
        url = f"{self.config.base_url}{path}"
        params = {**params, "mailto": self.config.mailto}
        try:
            return self._retrying()(self._request, url, params)
        except (RetryableStatusError, requests.RequestException) as e:
            raise TransportError(
                f"GET {url} failed after {self.config.max_retries + 1} attempts: {e}"
            ) from e

    def fetch_work(self, ref: str) -> WorkRecord:
        """
        Fetch one work by DOI or OpenAlex ID, from cache when possible.

        Args:
            ref: DOI or W-prefixed OpenAlex ID

        Returns:
            WorkRecord: The work's metadata and reference list
        """
        kind, value = parse_ref(ref)
        cached = self.cache.get(value) if kind == "openalex" else self.cache.get_by_doi(value)
        if cached is not None:
            logger.debug(f"Cache hit for {ref}")
            return cached

        if self.config.offline:
            raise UnknownWorkError(f"{ref} is not in the cache (offline mode)")

        if kind == "openalex":
            path = f"/works/{value}"
        else:
            path = f"/works/doi:{quote(value, safe='/')}"
        payload = self._get_json(path, {"select": SELECT_FIELDS})
        record = WorkRecord.from_openalex(payload)
        self.cache.put(record)
        return record

    def _fetch_chunk(self, chunk: List[str]) -> List[WorkRecord]:
        payload = self._get_json("/works", {
            "filter": "openalex_id:" + "|".join(chunk),
            "per-page": MAX_PER_PAGE,
            "select": SELECT_FIELDS,
        })
        wanted = set(chunk)
        records = []
        for item in payload.get("results") or []:
            try:
                record = WorkRecord.from_openalex(item)
            except DecodeError as e:
                logger.warning(f"Dropping undecodable work in batch: {e}")
                continue
            if record.id in wanted:
                self.cache.put(record)
                records.append(record)
        return records

    def fetch_works_batch(self, ids: List[str]) -> BatchResult:
        """
        Fetch many works, chunked to the API's OR-filter limit.

        Cached works are served without network calls. IDs OpenAlex cannot
        resolve are reported in ``missing`` rather than raising.

        Args:
            ids: OpenAlex work IDs (duplicates are ignored)

        Returns:
            BatchResult: Found records in input order and missing IDs
        """
        ordered = list(dict.fromkeys(normalize_openalex_id(i) for i in ids))
        found: Dict[str, WorkRecord] = {}
        for work_id in ordered:
            cached = self.cache.get(work_id)
            if cached is not None:
                found[work_id] = cached

        pending = [w for w in ordered if w not in found]
        if pending and not self.config.offline:
            chunks = [pending[i:i + MAX_IDS_PER_FILTER]
                      for i in range(0, len(pending), MAX_IDS_PER_FILTER)]
            workers = min(self.config.parallelism, len(chunks))
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for records in pool.map(self._fetch_chunk, chunks):
                    for record in records:
                        found[record.id] = record

        result = BatchResult(
            records=[found[w] for w in ordered if w in found],
            missing=[w for w in ordered if w not in found],
        )
        if result.missing:
            logger.info(f"{len(result.missing)} of {len(ordered)} works could not be resolved")
        return result

    def resolve_neighborhood(self, ref: str) -> ReferenceNeighborhood:
        """
        Fetch a work and the reference lists of all its references.

        Args:
            ref: DOI or OpenAlex ID of the focal work

        Returns:
            ReferenceNeighborhood: R, RR and the number of resolved references
        """
        focal = self.fetch_work(ref)
        references = [r for r in focal.referenced_works if r != focal.id]
        if len(references) < 2:
            raise DegenerateNeighborhoodError(
                f"{focal.id} lists {len(references)} reference(s); works with fewer "
                "than 2 references are excluded"
            )

        batch = self.fetch_works_batch(references)
        reference_refs = {record.id: record.referenced_works for record in batch.records}
        return ReferenceNeighborhood.build(focal.id, references, reference_refs)

    def list_works(self, filters: Dict[str, str], limit: int,
                   sample: Optional[int] = None, seed: Optional[int] = None,
                   rejected: Optional[List[Tuple[str, str]]] = None) -> List[WorkRecord]:
        """
        Page through the /works list endpoint.

        Args:
            filters: OpenAlex filter name -> value
            limit: Maximum number of works to return
            sample: Draw a random sample of this size instead of a full listing
            seed: Seed making the sample reproducible
            rejected: Receives (ref, message) for every undecodable list item

        Returns:
            List[WorkRecord]: Up to ``limit`` decoded works (all written to cache)
        """
        per_page = min(MAX_PER_PAGE, limit)
        base_params: Dict[str, Any] = {
            "filter": ",".join(f"{name}:{value}" for name, value in filters.items()),
            "per-page": per_page,
            "select": SELECT_FIELDS,
        }
        if sample is not None:
            base_params["sample"] = sample
            if seed is not None:
                base_params["seed"] = seed

        records: List[WorkRecord] = []
        page = 1
        while len(records) < limit:
            payload = self._get_json("/works", {**base_params, "page": page})
            results = payload.get("results")
            if not isinstance(results, list):
                raise DecodeError("list response has no 'results' array")
            for item in results:
                try:
                    record = WorkRecord.from_openalex(item)
                except DecodeError as e:
                    logger.warning(f"Skipping undecodable work in listing: {e}")
                    if rejected is not None:
                        rejected.append((_payload_ref(item), str(e)))
                    continue
                self.cache.put(record)
                records.append(record)
            if len(results) < per_page:
                break
            page += 1

        return records[:limit]
