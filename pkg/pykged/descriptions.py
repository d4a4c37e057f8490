import asyncio
import json
import logging
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional
from urllib.parse import quote, urlsplit
import aiohttp
from tqdm import tqdm
from pykged.errors import BackendError, MalformedResponseError, RetriesExhaustedError, TransientError
from pykged.utils import async_retrying

logger = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://en.wikipedia.org/api/rest_v1/page/summary/{entity}"

@dataclass(frozen = True)
class Description:
    entity: str
    text: str
    fetched_at: str
    source: str

def truncate_for_prompt(text, limit = 250):

    """
    First `limit` characters of a description. Characters are code points, so a multi-byte character is never split.

    Examples:

        >>> len(truncate_for_prompt("x" * 600))
        250
    """

    if text is None:
        return None
    return text[:limit]

def _extract_field(body, field_path):
    value = body
    for part in field_path.split("."):
        if not isinstance(value, dict) or part not in value:
            return None
        value = value[part]
    return value if isinstance(value, str) else None

async def aiohttp_get_transport(url, payload, headers, timeout):
    async with aiohttp.ClientSession(timeout = aiohttp.ClientTimeout(total = timeout)) as session:
        async with session.get(url, params = payload, headers = headers) as response:
            try:
                body = await response.json(content_type = None)
            except ValueError:
                body = None
            return response.status, body

class HttpFetcher:
    def __init__(self, endpoint = DEFAULT_ENDPOINT, field = "extract", retries = 3, backoff = 1.0, timeout = 60.0,
                 transport = None) -> None:
        assert "{entity}" in endpoint, "endpoint needs an {entity} placeholder"
        self.endpoint = endpoint
        self.field = field
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.source = urlsplit(endpoint).netloc or endpoint
        self.transport = transport if transport is not None else aiohttp_get_transport

    def url(self, entity):
        return self.endpoint.format(entity = quote(entity.replace(" ", "_"), safe = ""))

    def __call__(self, entity):

        """
        Return:
            the description text, or None when the endpoint does not know the entity or the body lacks the field.

        Raises:
            RetriesExhaustedError: timeouts, connection errors, 429 or 5xx on every attempt.
            MalformedResponseError: a 200 answer whose body is not a JSON object.
            BackendError: any other status.
        """

        url = self.url(entity)
        attempts = 0

        async def get():
            nonlocal attempts
            async for attempt in async_retrying(self.retries, self.backoff):
                with attempt:
                    attempts += 1
                    try:
                        status, body = await self.transport(url, None, {"Accept": "application/json"}, self.timeout)
                    except (asyncio.TimeoutError, aiohttp.ClientError) as e:
                        logger.warning("fetch of %s failed (attempt %d): %s", url, attempts, e.__class__.__name__)
                        raise TransientError(e.__class__.__name__)
                    if status == 404:
                        return None
                    if status == 429 or status >= 500:
                        logger.warning("fetch of %s failed (attempt %d): HTTP %d", url, attempts, status)
                        raise TransientError("HTTP {}".format(status))
                    if status != 200:
                        raise BackendError("HTTP {} from {}".format(status, url))
                    if not isinstance(body, dict):
                        raise MalformedResponseError("{} answered 200 without a JSON object".format(url))
                    return body

        try:
            body = asyncio.run(get())
        except TransientError as e:
            raise RetriesExhaustedError("gave up on {} after {} attempts, last error {}".format(url, attempts, e), attempts)
        if body is None:
            return None
        return _extract_field(body, self.field)

'''
The on-disk description cache. The JSON Lines file is read once into an in-memory index, reads never touch the disk
again. Fetches run outside the lock and only the check-and-append goes through it, so there is a single writer
and a slow fetch never blocks other pruning workers. An entity the endpoint does not know is cached with a null text
and never asked for again.
'''
class DescriptionStore:
    def __init__(self, cache_path = None, fetcher = None, offline = False, source = None) -> None:

        self.cache_path = cache_path
        self.fetcher = fetcher
        self.offline = offline
        self.source = source or getattr(fetcher, "source", "fetcher")
        self.index = {}
        # entities whose fetch failed after retries in this process, reported in traces
        self.failed = set()
        self.fetches = 0
        self._write_lock = threading.Lock()
        if cache_path is not None and os.path.exists(cache_path):
            self._load()

    @classmethod
    def from_config(cls, config, fetcher = None):
        if fetcher is None and not config["offline"]:
            fetcher = HttpFetcher(config["description_endpoint"], config["description_field"], config["retries"],
                                  config["backoff"], config["timeout"])
        return cls(config.resolve("description_cache"), fetcher, config["offline"])

    def _load(self):
        corrupt = 0
        with open(self.cache_path, encoding = "utf-8") as f:
            for line_number, line in enumerate(f, 1):
                if len(line.strip()) == 0:
                    continue
                try:
                    record = json.loads(line)
                    entity = record["entity"]
                    text = record.get("text")
                    assert isinstance(entity, str) and (text is None or isinstance(text, str))
                except (ValueError, KeyError, TypeError, AssertionError):
                    corrupt += 1
                    logger.warning("%s:%d: corrupt description cache record, skipping", self.cache_path, line_number)
                    continue
                self.index[entity] = record
        if corrupt > 0:
            logger.warning("rebuilding description cache %s from %d good records", self.cache_path, len(self.index))
            self._rewrite()
        logger.info("loaded %d cached descriptions from %s", len(self.index), self.cache_path)

    def _rewrite(self):
        tmp = self.cache_path + ".tmp"
        with open(tmp, "w", encoding = "utf-8") as f:
            for entity in self.index:
                f.write(json.dumps(self.index[entity], ensure_ascii = False) + "\n")
        os.replace(tmp, self.cache_path)

    def _append(self, record):
        self.index[record["entity"]] = record
        if self.cache_path is None:
            return
        directory = os.path.dirname(self.cache_path)
        if directory:
            os.makedirs(directory, exist_ok = True)
        with open(self.cache_path, "a", encoding = "utf-8") as f:
            f.write(json.dumps(record, ensure_ascii = False) + "\n")

    @staticmethod
    def _to_description(record):
        if record.get("text") is None or len(record["text"]) == 0:
            return None
        return Description(record["entity"], record["text"], record.get("fetched_at", ""), record.get("source", ""))

    def cached(self, entity):
        return entity in self.index

    def get_description(self, entity):

        """
        Args:
            entity (str): entity label.

        Return:
            Description, or None when the entity has no description, the fetch failed, or the store is offline and
            the entity is not cached.
        """

        record = self.index.get(entity)
        if record is not None:
            return self._to_description(record)
        if self.offline or self.fetcher is None:
            return None

        with self._write_lock:
            self.fetches += 1
        try:
            text = self.fetcher(entity)
        except BackendError as e:
            logger.warning("description fetch for %r failed: %s", entity, e)
            with self._write_lock:
                self.failed.add(entity)
            return None
        with self._write_lock:
            # a concurrent miss on the same entity may have appended first
            if entity in self.index:
                return self._to_description(self.index[entity])
            record = {"entity": entity, "text": text if text else None,
                      "fetched_at": datetime.now(timezone.utc).isoformat(timespec = "seconds"), "source": self.source}
            self._append(record)
        return self._to_description(record)

    def text(self, entity):
        description = self.get_description(entity)
        return description.text if description is not None else None

    def warm(self, entities):

        """
        Fetches every entity that is not cached yet.

        Return:
            dict with the number of entities that were already cached, fetched, found absent, and failed.
        """

        summary = {"cached": 0, "fetched": 0, "absent": 0, "failed": 0}
        for entity in tqdm(sorted(set(entities)), desc = "descriptions", disable = len(entities) < 50):
            if self.cached(entity):
                summary["cached"] += 1
                continue
            description = self.get_description(entity)
            if entity in self.failed:
                summary["failed"] += 1
            elif description is None:
                summary["absent"] += 1
            else:
                summary["fetched"] += 1
        return summary

def get_description(store, entity):
    return store.get_description(entity)
