import asyncio
import json
import logging
import threading
import time
import aiohttp
from pykged.errors import (BackendError, ConfigError, CredentialError, DatasetError, MalformedResponseError,
                           RetriesExhaustedError, ScriptError, TransientError)
from pykged.selector import (Selector, Selection, parse_response, system_prompt, ASSESSMENT, ENTITY_CHOICE, ACCEPT,
                             REJECT, EXACT)
from pykged.utils import async_retrying

logger = logging.getLogger(__name__)

async def aiohttp_transport(url, payload, headers, timeout):
    async with aiohttp.ClientSession(timeout = aiohttp.ClientTimeout(total = timeout)) as session:
        async with session.post(url, json = payload, headers = headers) as response:
            try:
                body = await response.json(content_type = None)
            except ValueError:
                body = None
            return response.status, body

def parse_chat_response(body):
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise MalformedResponseError("response has no choices[0].message.content: {!r}".format(body)[:500])
    if content is None:
        return ""
    if not isinstance(content, str):
        raise MalformedResponseError("message content is not text: {!r}".format(content)[:500])
    return content

class HttpSelector(Selector):
    name = "http"

    def __init__(self, endpoint, model, api_key, retries = 3, backoff = 1.0, timeout = 60.0, max_in_flight = 4,
                 requests_per_second = 0.0, template_version = "v1", transport = None) -> None:

        """
        A chat-completion client. One POST per query, temperature 0, the answer is the first choice's message.

        Args:
            endpoint (str): chat-completion URL.
            model (str): model name sent with every request.
            api_key (str): bearer credential.
            retries (int): extra attempts on timeouts, connection errors, 429 and 5xx.
            backoff (float): first wait between attempts in seconds, doubled every retry.
            max_in_flight (int): requests allowed at the same time across threads.
            requests_per_second (float): request-rate ceiling, 0 for none.
            transport (async callable, optional): (url, payload, headers, timeout) -> (status, json body).
                Defaults to an aiohttp POST. Tests hand in recorded responses here.

        Examples:

            >>> selector = HttpSelector("https://api.openai.com/v1/chat/completions", "gpt-3.5-turbo-1106",
            ...                         os.environ["PYKGED_API_KEY"])
            >>> selector.select(query).chosen_index
            2
        """

        super().__init__()
        if api_key is None or len(api_key) == 0:
            raise CredentialError("no credential for the chat-completion endpoint")
        assert max_in_flight >= 1
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.requests_per_second = requests_per_second
        self.template_version = template_version
        self.transport = transport if transport is not None else aiohttp_transport
        self._in_flight = threading.BoundedSemaphore(max_in_flight)
        self._rate_lock = threading.Lock()
        self._next_slot = 0.0

    @classmethod
    def from_config(cls, config, transport = None):
        api_key = config.api_key()
        if api_key is None:
            raise CredentialError("environment variable {} is not set".format(config["api_key_env"]))
        return cls(config["endpoint"], config["model"], api_key, config["retries"], config["backoff"], config["timeout"],
                   config["max_in_flight"], config["requests_per_second"], config["template_version"], transport)

    def payload(self, query):
        return {
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system_prompt(query.template_version)},
                {"role": "user", "content": query.prompt},
            ],
        }

    def _throttle(self):
        if self.requests_per_second <= 0:
            return
        with self._rate_lock:
            now = time.monotonic()
            wait = self._next_slot - now
            self._next_slot = max(now, self._next_slot) + 1.0 / self.requests_per_second
        if wait > 0:
            time.sleep(wait)

    def _request(self, payload):
        headers = {"Content-Type": "application/json", "Authorization": "Bearer " + self.api_key}
        attempts = 0

        async def post():
            nonlocal attempts
            async for attempt in async_retrying(self.retries, self.backoff):
                with attempt:
                    attempts += 1
                    try:
                        status, body = await self.transport(self.endpoint, payload, headers, self.timeout)
                    except (asyncio.TimeoutError, aiohttp.ClientError) as e:
                        logger.warning("request to %s failed (attempt %d): %s", self.endpoint, attempts, e.__class__.__name__)
                        raise TransientError(e.__class__.__name__)
                    if status in (401, 403):
                        raise CredentialError("endpoint rejected the credential with HTTP {}".format(status))
                    if status == 429 or status >= 500:
                        logger.warning("request to %s failed (attempt %d): HTTP %d", self.endpoint, attempts, status)
                        raise TransientError("HTTP {}".format(status))
                    if status != 200:
                        raise BackendError("endpoint answered HTTP {}: {!r}".format(status, body))
                    return parse_chat_response(body)

        try:
            content = asyncio.run(post())
        except TransientError as e:
            raise RetriesExhaustedError("gave up on {} after {} attempts, last error {}".format(self.endpoint, attempts, e), attempts)
        return content, attempts

    def _select(self, query):
        with self._in_flight:
            self._throttle()
            raw, attempts = self._request(self.payload(query))
        selection = parse_response(raw, query)
        selection.retries = attempts - 1
        return selection

'''
Replays answers from a JSON Lines script, one record per query: {"mention_id": ..., "ordinal": ..., "answer": ...}.
The ordinal counts the queries of one mention from 1. Answers are raw selector text and go through the same parser
as live answers, so a script can exercise the fallback paths too.
'''
class MockSelector(Selector):
    name = "mock"

    def __init__(self, script) -> None:
        super().__init__()
        self.script = dict(script)

    @classmethod
    def from_records(cls, records):
        script = {}
        for i, record in enumerate(records, 1):
            try:
                key = (str(record["mention_id"]), int(record["ordinal"]))
                answer = record["answer"]
            except (KeyError, TypeError, ValueError):
                raise DatasetError("mock script record needs mention_id, ordinal and answer: {!r}".format(record), i)
            if key in script:
                raise DatasetError("duplicate mock script entry for mention {!r} at ordinal {}".format(*key), i)
            script[key] = str(answer)
        return cls(script)

    @classmethod
    def from_jsonl(cls, path):
        records = []
        with open(path, encoding = "utf-8") as f:
            for line_number, line in enumerate(f, 1):
                if len(line.strip()) == 0:
                    continue
                try:
                    records.append(json.loads(line))
                except ValueError:
                    raise DatasetError("{}: not a JSON record".format(path), line_number)
        return cls.from_records(records)

    @classmethod
    def scripted(cls, answers):
        # {mention_id: [answer for ordinal 1, answer for ordinal 2, ...]}
        return cls({(mention_id, i): str(a) for mention_id in answers for i, a in enumerate(answers[mention_id], 1)})

    def _select(self, query):
        key = (query.mention_id, query.ordinal)
        if key not in self.script:
            raise ScriptError(query.mention_id, query.ordinal)
        return parse_response(self.script[key], query)

'''
Answers every query the way a perfect selector would, given the gold entity. Class options are judged by the leaves
they cover in the current dag; when a query carries no coverage the taxonomy decides instead.
'''
class OracleSelector(Selector):
    name = "oracle"

    def __init__(self, store = None, golds = None) -> None:
        super().__init__()
        self.store = store
        self.golds = dict(golds or {})

    def _is_above(self, option, gold):
        if option.label == gold or gold in option.covers:
            return True
        if len(option.covers) > 0 or self.store is None or not self.store.contains(gold):
            return False
        return option.label in self.store.entity_ancestors(gold)

    def select(self, query, gold = None):
        self._count(query)
        if gold is None:
            gold = self.golds.get(query.mention_id)
        return self._answer(query, gold)

    def _select(self, query):
        return self._answer(query, self.golds.get(query.mention_id))

    def _answer(self, query, gold):
        if query.kind == ASSESSMENT:
            verdict = ACCEPT if query.options[0].label == gold else REJECT
            return Selection(1, "yes" if verdict == ACCEPT else "no", EXACT, verdict)
        real = [option for option in query.options if not option.sentinel]
        if query.kind == ENTITY_CHOICE:
            picked = [option.index for option in real if option.label == gold]
            index = picked[0] if len(picked) > 0 else 1
        else:
            picked = [option.index for option in real if self._is_above(option, gold)]
            index = picked[0] if len(picked) > 0 else query.sentinel_index()
        return Selection(index, str(index), EXACT)

def make_selector(config, store = None, golds = None, transport = None):
    backend = config["backend"]
    if backend == "http":
        return HttpSelector.from_config(config, transport)
    elif backend == "mock":
        return MockSelector.from_jsonl(config.resolve("mock_script"))
    elif backend == "oracle":
        return OracleSelector(store, golds)
    else:
        raise ConfigError("unknown backend {!r}".format(backend))
