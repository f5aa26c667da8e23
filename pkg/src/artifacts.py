#!/usr/bin/env python3
"""
Artifact emission: CSV tables, JSON reports and the run manifest.

Every file written through an ArtifactWriter is hashed into manifest.yml
next to the config echo, so a run can be checked against its outputs.
If the run fails, discard() removes whatever was written.
"""

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np
import yaml


def git_blob_hash(body: bytes) -> str:
    """sha1 of 'blob <len>\\0' + body, as git computes it"""
    header = f"blob {len(body)}\0".encode('utf-8')
    return hashlib.sha1(header + body).hexdigest()


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ''
    return str(value)


def to_jsonable(obj):
    """Recursively turn numpy scalars and arrays into plain Python values"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        # JSON has no inf or nan
        return value if math.isfinite(value) else repr(value)
    if isinstance(obj, complex):
        return {'real': obj.real, 'imag': obj.imag}
    if hasattr(obj, 'value') and not isinstance(obj, str):
        return obj.value
    return obj


class ArtifactWriter:
    def __init__(self, out_dir: Path, subcommand: str, config: Dict[str, Any]):
        self.out_dir = Path(out_dir)
        self.subcommand = subcommand
        self.config = config
        self.written: List[Path] = []
        self.hashes: Dict[str, str] = {}

    def _emit(self, name: str, body: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        data = body.encode('utf-8')
        with open(path, 'wb') as f:
            f.write(data)
        self.written.append(path)
        self.hashes[name] = git_blob_hash(data)
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
        return self._emit(name, buffer.getvalue())

    def write_json(self, name: str, payload: Any) -> Path:
        body = json.dumps(to_jsonable(payload), indent=2, sort_keys=True)
        return self._emit(name, body + '\n')

    def finalize(self) -> Path:
        manifest = {
            'subcommand': self.subcommand,
            'master_seed': self.config.get('master_seed'),
            'config': self.config,
            'files': dict(sorted(self.hashes.items())),
        }
        return self._emit('manifest.yml', yaml.safe_dump(manifest, default_flow_style=False, sort_keys=False))

    def discard(self):
        for path in self.written:
            if path.exists():
                path.unlink()
        self.written.clear()
        self.hashes.clear()


def read_csv_rows(path: Path) -> List[List[str]]:
    with open(path, 'r', newline='') as f:
        return list(csv.reader(f))
