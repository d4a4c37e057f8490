import logging
import re
import threading
from dataclasses import dataclass, field
from typing import Optional
import jinja2
from pykged.descriptions import truncate_for_prompt
from pykged.errors import ConfigError

logger = logging.getLogger(__name__)

CLASS_CHOICE = "ClassChoice"
ENTITY_CHOICE = "EntityChoice"
MIXED_CHOICE = "MixedChoice"
ASSESSMENT = "Assessment"
QUERY_KINDS = (CLASS_CHOICE, ENTITY_CHOICE, MIXED_CHOICE, ASSESSMENT)

NONE = "None"
OTHER = "Other"
SENTINELS = {CLASS_CHOICE: NONE, MIXED_CHOICE: OTHER}

ACCEPT = "accept"
REJECT = "reject"

EXACT = "exact"
NORMALIZED = "normalized"
FALLBACK = "fallback"

NO_DESCRIPTION = "no description available"

@dataclass
class Option:
    index: int
    label: str
    description: Optional[str] = None
    sentinel: bool = False
    # leaves of the current dag under this option, never rendered into the prompt
    covers: list = field(default_factory = list)

    def to_dict(self):
        return {"index": self.index, "label": self.label, "description": self.description,
                "sentinel": self.sentinel, "covers": list(self.covers)}

@dataclass
class ChoiceQuery:
    kind: str
    mention: str
    document_excerpt: str
    options: list
    sentinel: Optional[str] = None
    mention_id: Optional[str] = None
    ordinal: int = 0
    template_version: str = "v1"
    multi_select: bool = False
    prompt: str = ""

    def labels(self):
        return [option.label for option in self.options]

    def option(self, index):
        assert 1 <= index <= len(self.options), "option index {} out of range".format(index)
        return self.options[index - 1]

    def sentinel_index(self):
        for option in self.options:
            if option.sentinel:
                return option.index
        return None

@dataclass
class Selection:
    chosen_index: int
    raw_response: str
    parse_status: str
    verdict: Optional[str] = None
    chosen_indices: list = field(default_factory = list)
    retries: int = 0

    def indices(self):
        return self.chosen_indices if len(self.chosen_indices) > 0 else [self.chosen_index]

    def to_dict(self):
        return {"chosen_index": self.chosen_index, "chosen_indices": list(self.chosen_indices), "verdict": self.verdict,
                "parse_status": self.parse_status, "raw_response": self.raw_response, "retries": self.retries}

    @classmethod
    def from_dict(cls, d):
        return cls(d["chosen_index"], d.get("raw_response", ""), d.get("parse_status", EXACT), d.get("verdict"),
                   list(d.get("chosen_indices", [])), d.get("retries", 0))


# Prompt templates, keyed by version. A new wording gets a new version so that traces stay comparable.
TEMPLATES = {
    "v1": {
        "system": "You are an expert in entity disambiguation. You answer multiple-choice questions about which "
                  "entity a mention in a text refers to.",
        CLASS_CHOICE: """Text: "{{ excerpt }}"

Which of the following classes does "{{ mention }}" in the text belong to?
{% for option in options %}{{ option.index }}. {{ option.label }}
{% endfor %}{% if multi_select %}Answer with the numbers of all fitting options, separated by commas.{% else %}Answer with the number of the option only.{% endif %}""",
        MIXED_CHOICE: """Text: "{{ excerpt }}"

Which of the following classes does "{{ mention }}" in the text belong to? Choose {{ sentinel }} if it is none of the listed classes.
{% for option in options %}{{ option.index }}. {{ option.label }}
{% endfor %}Answer with the number of the option only.""",
        ENTITY_CHOICE: """Text: "{{ excerpt }}"

Which of the following entities does "{{ mention }}" in the text refer to?
{% for option in options %}{{ option.index }}. {{ option.label }}: {{ option.description or no_description }}
{% endfor %}Answer with the number of the option only.""",
        ASSESSMENT: """Text: "{{ excerpt }}"

Does "{{ mention }}" in the text refer to the following entity?
{{ options[0].label }}: {{ options[0].description or no_description }}
Answer yes to accept or no to reject.""",
    },
}

_jinja_env = jinja2.Environment(undefined = jinja2.StrictUndefined, keep_trailing_newline = False)
_compiled = {}

def get_template(version, kind):
    if version not in TEMPLATES:
        raise ConfigError("unknown template version {!r}, known: {}".format(version, sorted(TEMPLATES)))
    key = (version, kind)
    if key not in _compiled:
        _compiled[key] = _jinja_env.from_string(TEMPLATES[version][kind])
    return _compiled[key]

def template_id(version):
    if version not in TEMPLATES:
        raise ConfigError("unknown template version {!r}, known: {}".format(version, sorted(TEMPLATES)))
    return "pykged/" + version

def system_prompt(version):
    return TEMPLATES[version]["system"]

def excerpt_window(document, start, end, width):

    """
    Cuts a window of at most `width` characters out of `document`, centered on the mention span.

    Args:
        document (str): the full text.
        start (int): mention start offset, or None when unknown.
        end (int): mention end offset, or None when unknown.
        width (int): window size in characters.

    Return:
        the excerpt. Documents that fit are returned whole.
    """

    assert width > 0
    if len(document) <= width:
        return document
    if start is None or end is None:
        start, end = 0, 0
    middle = (start + end) // 2
    low = max(0, middle - width // 2)
    high = min(len(document), low + width)
    low = max(0, high - width)
    return document[low:high]

def build_query(kind, mention, document, options, descriptions = None, mention_id = None, ordinal = 0, start = None,
                end = None, context_window = 2000, desc_limit = 250, template_version = "v1", covers = None,
                multi_select = False):

    """
    Builds one multiple-choice question. ClassChoice queries get the None sentinel appended, MixedChoice queries the
    Other sentinel. Entity options carry their description cut to `desc_limit` characters.

    Args:
        kind (str): ClassChoice, EntityChoice, MixedChoice or Assessment.
        mention (str): mention surface text.
        document (str): the document the mention occurs in.
        options (list): option labels in display order.
        descriptions (dict, optional): label -> description text or None.
        covers (dict, optional): label -> candidate leaves under that option, kept on the options for traces.

    Return:
        ChoiceQuery with its rendered prompt.

    Examples:

        >>> query = build_query(CLASS_CHOICE, "Phoenix", text, ["FictionalEntity", "Organization", "Place", "Product"])
        >>> query.labels()
        ['FictionalEntity', 'Organization', 'Place', 'Product', 'None']
    """

    assert kind in QUERY_KINDS, "unknown query kind " + str(kind)
    assert len(options) > 0, "a query needs at least one option"
    if kind == ASSESSMENT:
        assert len(options) == 1, "an assessment has exactly one option"
    descriptions = descriptions or {}
    covers = covers or {}

    rendered = []
    for i, label in enumerate(options, 1):
        description = None
        if kind in (ENTITY_CHOICE, ASSESSMENT) and descriptions.get(label) is not None:
            description = truncate_for_prompt(descriptions[label], desc_limit)
        rendered.append(Option(i, label, description, False, list(covers.get(label, []))))
    sentinel = SENTINELS.get(kind)
    if sentinel is not None:
        rendered.append(Option(len(rendered) + 1, sentinel, None, True, []))

    if start is None and len(mention) > 0:
        found = document.lower().find(mention.lower())
        if found >= 0:
            start, end = found, found + len(mention)
    excerpt = excerpt_window(document, start, end, context_window)

    query = ChoiceQuery(kind, mention, excerpt, rendered, sentinel, mention_id, ordinal, template_version,
                        multi_select and kind == CLASS_CHOICE)
    query.prompt = get_template(template_version, kind).render(excerpt = excerpt, mention = mention,
        options = rendered, sentinel = sentinel, multi_select = query.multi_select, no_description = NO_DESCRIPTION)
    return query

_LEADING_INT = re.compile(r"^\W*(\d+)")
_ALL_INTS = re.compile(r"\d+")
_SPACING = re.compile(r"[\s_]+")
_YES = re.compile(r"\b(yes|accept|accepted|correct|true)\b", re.IGNORECASE)
_NO = re.compile(r"\b(no|reject|rejected|incorrect|false)\b", re.IGNORECASE)

def _parse_assessment(raw, query):
    text = raw.strip()
    head = text.split()[0].strip(".,:;!\"'()").lower() if len(text) > 0 else ""
    if head in ("yes", "accept", "1"):
        return Selection(1, raw, EXACT, ACCEPT)
    if head in ("no", "reject", "0"):
        return Selection(1, raw, EXACT, REJECT)
    yes, no = _YES.search(text), _NO.search(text)
    if yes and not no:
        return Selection(1, raw, NORMALIZED, ACCEPT)
    if no and not yes:
        return Selection(1, raw, NORMALIZED, REJECT)
    logger.warning("could not read an assessment from %r for mention %r, accepting", raw, query.mention_id)
    return Selection(1, raw, FALLBACK, ACCEPT)

def _fold(text):
    # "Phoenix,_Arizona" and "phoenix, arizona" fold to the same string
    return _SPACING.sub(" ", text.lower())

def _label_matches(raw, query):
    text = _fold(raw)
    hits = [option for option in query.options if _fold(option.label) in text]
    # a label contained in a longer matching label does not count on its own
    hits = [h for h in hits if not any(h is not o and _fold(h.label) in _fold(o.label) for o in hits)]
    return hits

def parse_response(raw, query):

    """
    Reads a selector answer. A leading option number wins, then a label that appears in the answer and only once among
    the options, ignoring case and treating underscores as spaces. Last comes the fallback: the sentinel if the query
    has one, else option 1.

    Never raises, every fallback is marked on the Selection so it shows up in the trace counters.
    """

    raw = raw if raw is not None else ""
    if query.kind == ASSESSMENT:
        return _parse_assessment(raw, query)
    n = len(query.options)

    if query.multi_select:
        picked = []
        for token in _ALL_INTS.findall(raw):
            index = int(token)
            if 1 <= index <= n and index not in picked:
                picked.append(index)
        real = [i for i in picked if not query.option(i).sentinel]
        if len(real) > 0:
            return Selection(real[0], raw, EXACT, None, real if len(real) > 1 else [])
        if len(picked) > 0:
            return Selection(picked[0], raw, EXACT)
    else:
        match = _LEADING_INT.match(raw)
        if match is not None and 1 <= int(match.group(1)) <= n:
            return Selection(int(match.group(1)), raw, EXACT)

    hits = _label_matches(raw, query)
    if len(hits) == 1:
        return Selection(hits[0].index, raw, NORMALIZED)

    fallback = query.sentinel_index() or 1
    logger.warning("could not read an option from %r for mention %r, falling back to %s", raw, query.mention_id,
                   query.option(fallback).label)
    return Selection(fallback, raw, FALLBACK)

'''
Everything the pruning loop talks to. Subclasses implement _select; select() keeps the call counters, which are
shared between threads when an evaluation runs mentions in parallel.
'''
class Selector:
    name = "selector"

    def __init__(self) -> None:
        self.calls = 0
        self.calls_by_kind = {kind: 0 for kind in QUERY_KINDS}
        self._counter_lock = threading.Lock()

    def _count(self, query):
        with self._counter_lock:
            self.calls += 1
            self.calls_by_kind[query.kind] += 1

    def select(self, query):
        self._count(query)
        return self._select(query)

    def _select(self, query):
        raise NotImplementedError

    def close(self):
        pass
