import hashlib
import json
import os
from tenacity import AsyncRetrying, stop_after_attempt, wait_exponential, retry_if_exception_type
from pykged.errors import TransientError

def file_checksum(path):
    if path is None or not os.path.exists(path):
        return None
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()

def dumps(obj):
    # callers pass dicts in a fixed field order; keys are not re-sorted
    return json.dumps(obj, ensure_ascii = False, indent = 2) + "\n"

def write_json(obj, path):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok = True)
    with open(path, "w", encoding = "utf-8") as f:
        f.write(dumps(obj))
    return path

def safe_filename(label):
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in label)

def async_retrying(retries, backoff, max_wait = 30.0):
    # `retries` extra attempts after the first, waits backoff, 2*backoff, 4*backoff ... between them
    return AsyncRetrying(stop = stop_after_attempt(retries + 1), wait = wait_exponential(multiplier = backoff, max = max_wait),
                         retry = retry_if_exception_type(TransientError), reraise = True)

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")

def data_path(name):
    # files shipped under pykged/data
    return os.path.join(DATA_DIR, name)
