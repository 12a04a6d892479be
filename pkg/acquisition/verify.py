"""
Re-hash a bundle against its manifest, and the ledger against the digest in
the manifest footer. Read-only; nothing in the bundle is touched.
"""
import glob
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

from tqdm import tqdm

from acquisition.manifest import LEDGER_NAME, MANIFEST_NAME, EvidenceManifest
from ncforensic.errors import EXIT_FAILURE
from ncforensic.utils import sha256_file
from ncforensic.webdav import MAX_WALK_WORKERS

logger = logging.getLogger(__name__)


@dataclass
class Mismatch:
    bundle_path: str
    expected: str
    actual: str

    def to_dict(self):
        return {'bundle_path': self.bundle_path, 'expected': self.expected,
                'actual': self.actual}


@dataclass
class VerificationReport:
    bundle_dir: str
    manifest_digest: str
    matches: List[str] = field(default_factory=list)
    mismatches: List[Mismatch] = field(default_factory=list)
    missing: List[str] = field(default_factory=list)
    failed_records: int = 0
    ledger_ok: Optional[bool] = None

    @property
    def ok(self):
        return not self.mismatches and not self.missing and self.ledger_ok is not False

    @property
    def exit_status(self):
        return 0 if self.ok else EXIT_FAILURE

    def to_dict(self):
        return {'bundle_dir': self.bundle_dir, 'manifest_digest': self.manifest_digest,
                'matches': list(self.matches),
                'mismatches': [m.to_dict() for m in self.mismatches],
                'missing': list(self.missing), 'failed_records': self.failed_records,
                'ledger_ok': self.ledger_ok}

    @classmethod
    def from_dict(cls, data):
        return cls(bundle_dir=data['bundle_dir'], manifest_digest=data['manifest_digest'],
                   matches=list(data['matches']),
                   mismatches=[Mismatch(**m) for m in data['mismatches']],
                   missing=list(data['missing']), failed_records=data['failed_records'],
                   ledger_ok=data['ledger_ok'])


def _check(bundle_dir, record):
    stored = os.path.join(bundle_dir, *record.bundle_path.split('/'))
    if not os.path.isfile(stored):
        return record.bundle_path, None
    return record.bundle_path, sha256_file(stored)


def _verify_one(bundle_dir, prefix, report, workers, show_progress):
    manifest = EvidenceManifest.load(bundle_dir)
    checkable = []
    for record in manifest.records:
        if record.failed or not record.sha256:
            report.failed_records += 1
            continue
        if '..' in record.bundle_path.split('/') or record.bundle_path.startswith('/'):
            report.missing.append(prefix + record.bundle_path)
            continue
        checkable.append(record)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = pool.map(lambda r: _check(bundle_dir, r), checkable)
        for record, (path, actual) in tqdm(zip(checkable, results), total=len(checkable),
                                           desc='verify', disable=not show_progress):
            if actual is None:
                report.missing.append(prefix + path)
            elif actual == record.sha256:
                report.matches.append(prefix + path)
            else:
                report.mismatches.append(Mismatch(prefix + path, record.sha256, actual))
    ledger_path = os.path.join(bundle_dir, LEDGER_NAME)
    if os.path.isfile(ledger_path) and manifest.request_ledger_digest:
        ok = sha256_file(ledger_path) == manifest.request_ledger_digest
        report.ledger_ok = ok if report.ledger_ok is None else (report.ledger_ok and ok)
    return manifest


def verify_bundle(bundle_dir, workers=MAX_WALK_WORKERS, include_cycles=True,
                  show_progress=False):
    """
    Inputs:
    - bundle_dir: directory holding manifest.jsonl
    - include_cycles: also verify monitor/cycle-NNNN/ sub-bundles
    Outputs:
    - VerificationReport; exit_status is nonzero iff some stored object is
      altered or missing, or the ledger no longer matches its digest
    """
    manifest_path = os.path.join(bundle_dir, MANIFEST_NAME)
    EvidenceManifest.load(manifest_path)
    report = VerificationReport(bundle_dir=bundle_dir, manifest_digest=sha256_file(manifest_path))
    workers = max(1, min(workers, MAX_WALK_WORKERS))
    _verify_one(bundle_dir, '', report, workers, show_progress)
    if include_cycles:
        pattern = os.path.join(bundle_dir, 'monitor', 'cycle-*', MANIFEST_NAME)
        for cycle_manifest in sorted(glob.glob(pattern)):
            cycle_dir = os.path.dirname(cycle_manifest)
            prefix = os.path.relpath(cycle_dir, bundle_dir).replace(os.sep, '/') + '/'
            _verify_one(cycle_dir, prefix, report, workers, show_progress)
    logger.info('{}: {} match, {} mismatch, {} missing, ledger {}'.format(
        bundle_dir, len(report.matches), len(report.mismatches), len(report.missing),
        {None: 'absent', True: 'ok', False: 'MISMATCH'}[report.ledger_ok]))
    return report
