"""Bundled reference fixtures: two 42x11 transfer tables and the task
manifest covering all 53 ids.

The files are frozen; their hashes are checked at load time so a silent
edit cannot skew the reproduced statistics.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .core import TaskMeta, TransferTable
from .errors import SchemaError
from .formats import parse_manifest, parse_transfer_table

FIXTURE_DIR_ENV = "ITRANK_FIXTURES"

FIXTURE_HASHES = {
    "roberta_transfer.tsv":
        "b144c4520b5432411f1ec2c6bf0fec903e0ae6563e64e1545d28142b74f6e84e",
    "bert_transfer.tsv":
        "237139d94b9baf94de849c1e08f09bcc580861f0e89cd263b16412ec12fb0f37",
    "manifest.tsv":
        "f1fcbfee7b3b2213191444de68936c0aed5a3b34f154f750728ad54fc288b451",
}

SPOT_CHECKS = [
    ("roberta", "SST-2", "Rotten Tomatoes", 92.03),
    ("roberta", "Social IQA", "COPA", 79.92),
    ("roberta", "ANLI", "RTE", 84.40),
]
BASELINE_SPOT = ("roberta", "BoolQ", 62.17)


class FixtureIntegrityError(SchemaError):
    """A bundled fixture file does not match its frozen content hash."""


@dataclass(frozen=True)
class FixtureBundle:
    roberta_table: TransferTable
    bert_table: TransferTable
    manifest: dict[str, TaskMeta]

    def table(self, tag: str) -> TransferTable:
        if tag == "roberta":
            return self.roberta_table
        if tag == "bert":
            return self.bert_table
        raise SchemaError(f"unknown fixture table {tag!r}")


def fixture_dir() -> Path:
    override = os.environ.get(FIXTURE_DIR_ENV)
    if override:
        return Path(override)
    return Path(resources.files("itrank") / "fixtures")


def _read_checked(directory: Path, name: str, verify_hash: bool) -> str:
    path = directory / name
    if not path.exists():
        raise FixtureIntegrityError(f"fixture file missing: {path}")
    raw = path.read_bytes()
    if verify_hash:
        digest = hashlib.sha256(raw).hexdigest()
        if digest != FIXTURE_HASHES[name]:
            raise FixtureIntegrityError(
                f"fixture {name} hash mismatch: {digest}")
    return raw.decode("utf-8")


def load_fixtures(directory: Path | None = None,
                  verify_hash: bool | None = None) -> FixtureBundle:
    """Load and validate the bundled fixtures.

    Hash verification defaults to on for the bundled files and off for
    an explicitly supplied directory.
    """
    if verify_hash is None:
        verify_hash = directory is None and FIXTURE_DIR_ENV not in os.environ
    directory = directory or fixture_dir()
    roberta = parse_transfer_table(
        _read_checked(directory, "roberta_transfer.tsv", verify_hash))
    bert = parse_transfer_table(
        _read_checked(directory, "bert_transfer.tsv", verify_hash))
    manifest = parse_manifest(_read_checked(directory, "manifest.tsv",
                                            verify_hash))

    for table in (roberta, bert):
        n_cells = len(table.intermediates) * len(table.targets)
        if n_cells != 42 * 11:
            raise FixtureIntegrityError(
                f"{table.model_tag} fixture has {n_cells} cells, expected 462")
    if set(roberta.intermediates) != set(bert.intermediates) \
            or set(roberta.targets) != set(bert.targets):
        raise FixtureIntegrityError("fixture tables disagree on task ids")
    covered = set(roberta.intermediates) | set(roberta.targets)
    if set(manifest) != covered or len(manifest) != 53:
        raise FixtureIntegrityError("manifest does not cover the 53 fixture ids")

    tables = {"roberta": roberta, "bert": bert}
    for tag, s, t, expect in SPOT_CHECKS:
        got = tables[tag].score(s, t)
        if abs(got - expect) > 1e-9:
            raise FixtureIntegrityError(
                f"{tag} cell ({s}, {t}) = {got}, expected {expect}")
    tag, t, expect = BASELINE_SPOT
    if abs(tables[tag].baseline[t] - expect) > 1e-9:
        raise FixtureIntegrityError(
            f"{tag} baseline for {t} = {tables[tag].baseline[t]}, "
            f"expected {expect}")
    return FixtureBundle(roberta_table=roberta, bert_table=bert,
                         manifest=manifest)
