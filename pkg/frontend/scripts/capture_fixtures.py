#!/usr/bin/env python3
"""Regenerate tests/fixtures from a real gateway and the real CLI.

Everything here talks to the backend exclusively through its external
interfaces: the ``crowdlabel`` console script and the HTTP API. Three
snapshots are captured:

- fresh/: a just-configured campaign with the default taxonomy (all zeros)
- campaign/: admin endpoints served from a simulated event log, plus the
  ``stats`` and ``plan`` CLI outputs for that same log
- annotator/: a qualification payload and a claimed HIT payload from a
  small synthetic campaign (control ids start with ``ctl-``)

Usage: python3 scripts/capture_fixtures.py
"""

import json
import shutil
import subprocess
import sys
import tempfile
import time
import urllib.error
import urllib.request
from pathlib import Path

PORT = 8093
BASE = f"http://127.0.0.1:{PORT}"
ADMIN_TOKEN = "fixture-admin"
FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

SIM_ARGS = [
    "--sentences", "80",
    "--workers", "6",
    "--mix", "calibrated:0.75:0.9,spammer:0.25",
    "--seed", "3",
]
QUEUE_TOP = "10"


def call(method, path, body=None, headers=None, text=False):
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(BASE + path, data=data, method=method)
    req.add_header("Content-Type", "application/json")
    for key, value in (headers or {}).items():
        req.add_header(key, value)
    with urllib.request.urlopen(req) as resp:
        payload = resp.read().decode()
    return payload if text else json.loads(payload)


def admin(method, path, body=None, text=False):
    return call(method, path, body, {"X-Admin-Token": ADMIN_TOKEN}, text=text)


def wait_healthy(deadline=15.0):
    start = time.monotonic()
    while time.monotonic() - start < deadline:
        try:
            call("GET", "/healthz")
            return
        except (urllib.error.URLError, ConnectionError):
            time.sleep(0.2)
    raise RuntimeError("gateway did not become healthy")


class Server:
    def __init__(self, data_dir):
        self.proc = subprocess.Popen(
            [
                "crowdlabel", "serve",
                "--data-dir", str(data_dir),
                "--admin-token", ADMIN_TOKEN,
                "--port", str(PORT),
            ],
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
        )

    def __enter__(self):
        wait_healthy()
        return self

    def __exit__(self, *exc):
        self.proc.terminate()
        self.proc.wait(timeout=10)


def cli(*args):
    result = subprocess.run(
        ["crowdlabel", *args], capture_output=True, text=True, check=True
    )
    return json.loads(result.stdout)


def write(path, record):
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(record, str):
        path.write_text(record)
    else:
        path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def capture_admin_set(out_dir):
    write(out_dir / "progress.json", admin("GET", "/admin/progress"))
    write(out_dir / "agreement.json", admin("GET", "/admin/agreement"))
    write(out_dir / "suspensions.json", admin("GET", "/admin/suspensions"))
    write(out_dir / "cost.json", admin("GET", "/admin/cost"))
    write(out_dir / "difficulty.json", admin("GET", "/admin/difficulty"))
    write(out_dir / "plan.json", admin("GET", "/admin/plan"))
    write(out_dir / "state.json", admin("GET", "/admin/state"))


def capture_fresh(tmp):
    out = FIXTURES / "fresh"
    with Server(tmp / "fresh"):
        admin("POST", "/admin/configure", {"seed": 0})
        capture_admin_set(out)


def capture_campaign(tmp):
    out = FIXTURES / "campaign"
    data_dir = tmp / "campaign"
    data_dir.mkdir()
    log = data_dir / "events.jsonl"
    cli("simulate", *SIM_ARGS, "--log", str(log))
    shutil.copy(log, out.parent / "events.jsonl")
    write(out / "cli-stats.json", cli("stats", "--log", str(log), "--top", QUEUE_TOP))
    write(out / "cli-plan.json", cli("plan"))
    with Server(data_dir):
        capture_admin_set(out)
        write(out / "patch.jsonl", admin("GET", "/admin/patch", text=True))


def instance(iid):
    return {
        "id": iid,
        "token": ["Li", "Wei", "visited", "the", "old", "mill", "twice", "."],
        "subj_start": 0, "subj_end": 1,
        "obj_start": 4, "obj_end": 5,
        "subj_type": "PERSON", "obj_type": "THING",
        "relation": None, "split": "train",
    }


def capture_annotator(tmp):
    out = FIXTURES / "annotator"
    with Server(tmp / "annotator"):
        admin("POST", "/admin/configure", {"synthetic_labels": 5, "seed": 0})
        admin("POST", "/admin/annotators", {
            "annotator_id": "fixture-ann",
            "approved_count": 800,
            "approval_rate": "0.97",
        })
        admin("POST", "/admin/tests", {
            "cluster": "synthetic",
            "questions": [{
                "instance": instance("q-0"),
                "choices": [
                    "PERSON:REL_00", "PERSON:REL_01", "NO_RELATION", "WRONG_TYPE",
                ],
                "correct": "PERSON:REL_00",
            }],
        })
        for i in range(8):
            admin("POST", "/admin/controls", {
                "instance": instance(f"ctl-{i}"),
                "true_label": "PERSON:REL_00",
            })
        admin("POST", "/admin/sentences", {
            "instances": [instance(f"s-{i}") for i in range(4)],
        })
        token = call("POST", "/sessions", {"annotator_id": "fixture-ann"})["token"]
        auth = {"Authorization": f"Bearer {token}"}
        write(out / "qualification.json", call("GET", "/qualification/synthetic", headers=auth))
        call("POST", "/qualification/synthetic", {"answers": {"q-0": "PERSON:REL_00"}}, auth)
        admin("POST", "/admin/waves")
        next_hit = call("GET", "/hits/next", headers=auth)
        write(out / "next-hit.json", next_hit)


def main():
    with tempfile.TemporaryDirectory(prefix="crowdlabel-fixtures-") as name:
        tmp = Path(name)
        for step in (capture_fresh, capture_campaign, capture_annotator):
            step(tmp)
    print(f"fixtures written to {FIXTURES}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
