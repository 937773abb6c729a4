"""JSON artifact helpers: reading, writing, hashing and space-hash checks."""
import os
import json
import hashlib
import logging

from search_space.errors import ArtifactIOError, MissingArtifactError, SchemaMismatchError, InvalidInputError


def read_json(path):
    if not os.path.exists(path):
        raise MissingArtifactError(f"file not found: {path}")
    try:
        with open(path, "r") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"invalid JSON in {path}: {e}")
    except OSError as e:
        raise ArtifactIOError(f"cannot read {path}: {e}")


def write_json(path, data):
    """Write JSON with sorted keys so reruns are byte-identical"""
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise ArtifactIOError(f"cannot write {path}: {e}")
    logging.debug(f"Wrote {path}")


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def data_sha256(data):
    return hashlib.sha256(json.dumps(data, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def require_file(path, what="artifact"):
    if not path or not os.path.exists(path):
        raise MissingArtifactError(f"{what} not found: {path}")
    return path


def check_space_hash(expected, found, what):
    """Raise when an artifact was built against a different search space"""
    if expected != found:
        logging.error(f"Space hash mismatch for {what}: expected {expected}, found {found}")
        raise SchemaMismatchError(f"{what} was built for space {found}, expected {expected}")


def reject_unknown_keys(data, allowed, what):
    unknown = sorted(set(data) - set(allowed) - {"_note"})
    if unknown:
        raise InvalidInputError(f"unknown {what} keys: {', '.join(unknown)}")
