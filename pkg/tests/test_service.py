import json
import threading
import time
import urllib.request

import pytest

from modsep.service import AnnotationBridge, ServiceOracle, start_service
from modsep.trainer import TrainConfig, Trainer


def http(method, url, payload=None):
    data = json.dumps(payload).encode() if payload is not None else None
    req = urllib.request.Request(url, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=5) as resp:
            return resp.status, json.loads(resp.read() or b"{}")
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read() or b"{}")


class LiveSession:
    """A small interactive ada training session driven over HTTP."""

    def __init__(self, ds, max_epoch=6, budget=0.10, timeout=30.0):
        self.ds = ds
        self.bridge = AnnotationBridge(ds.class_names,
                                       annotation_timeout=timeout)
        self.server, _ = start_service(self.bridge, port=0)
        self.base = f"http://127.0.0.1:{self.server.server_address[1]}"
        cfg = TrainConfig(mode="ada", max_epoch=max_epoch, seed=0,
                          budget=budget)
        self.trainer = Trainer(ds, cfg, oracle=ServiceOracle(self.bridge),
                               hooks=self.bridge)
        self.report = None
        self.thread = threading.Thread(target=self._run, daemon=True)
        self.thread.start()

    def _run(self):
        self.report = self.trainer.run()

    def get(self, path):
        return http("GET", self.base + path)

    def post(self, path, payload):
        return http("POST", self.base + path, payload)

    def wait_queue(self, timeout=20.0):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            _, queue = self.get("/queue")
            if queue:
                return queue
            time.sleep(0.02)
        raise TimeoutError("no annotation round opened")

    def label_all(self, truth):
        while True:
            _, queue = self.get("/queue")
            if not queue:
                status = self.get("/status")[1]
                if status["budget_used"] >= status["budget_total"]:
                    return
                if self.report is not None:
                    return
                time.sleep(0.02)
                continue
            for item in queue:
                self.post("/labels", {"sample_id": item["sample_id"],
                                      "label": int(truth[item["sample_id"]]),
                                      "annotator": "test"})

    def finish(self, truth, timeout=30.0):
        deadline = time.monotonic() + timeout
        while self.report is None and time.monotonic() < deadline:
            self.label_all(truth)
            time.sleep(0.02)
        assert self.report is not None, "training did not finish"
        return self.report


@pytest.fixture()
def session(small_dataset):
    s = LiveSession(small_dataset)
    yield s
    s.bridge.stop()
    s.server.shutdown()


class TestEndpoints:
    def test_full_interactive_session(self, session, small_dataset):
        truth = small_dataset.hidden_labels("target", "eval")

        code, status = session.get("/status")
        assert code == 200
        assert status["mode"] == "ada"
        assert status["budget_total"] == 8
        assert status["class_names"] == small_dataset.class_names

        queue = session.wait_queue()
        assert len(queue) <= 4                      # b_r = ceil(0.5 * 8)
        cats = [item["category"] for item in queue]
        assert all(c in ("UN-a", "UN-e") for c in cats)
        # UN-a items precede UN-e items, each block sorted by un_score
        if "UN-e" in cats and "UN-a" in cats:
            assert cats.index("UN-e") > max(i for i, c in enumerate(cats)
                                            if c == "UN-a")
        for block in ("UN-a", "UN-e"):
            scores = [it["un_score"] for it in queue if it["category"] == block]
            assert scores == sorted(scores)
        for item in queue:
            assert set(item) >= {"sample_id", "category", "un_score",
                                 "top_classes_vision", "top_classes_text",
                                 "round"}
            assert len(item["top_classes_vision"]) == 3

        # GETs never mutate anything
        before = session.get("/queue")[1]
        for _ in range(5):
            session.get("/status")
            session.get("/queue")
            session.get("/metrics")
        assert session.get("/queue")[1] == before

        # label validation
        sample = queue[0]["sample_id"]
        used0 = session.get("/status")[1]["budget_used"]
        code, _ = session.post("/labels", {"sample_id": sample, "label": 99})
        assert code == 400
        code, _ = session.post("/labels", {"sample_id": 10_000, "label": 0})
        assert code == 404
        code, _ = session.post("/labels", {"sample_id": sample,
                                           "label": int(truth[sample])})
        assert code == 200
        assert session.get("/status")[1]["budget_used"] == used0 + 1
        code, body = session.post("/labels", {"sample_id": sample,
                                              "label": int(truth[sample])})
        assert code == 409 and body["error"] == "duplicate"
        # labeled items disappear from the queue
        remaining = [it["sample_id"] for it in session.get("/queue")[1]]
        assert sample not in remaining

        # 404 on unknown routes
        assert session.get("/nope")[0] == 404

        report = session.finish(truth)
        assert report["budget_used"] == 8
        # all labels entered the annotation set faithfully
        assert all(truth[i] == l for i, l in report["annotations"])

        # no label accepted once the budget is gone
        code, body = session.post("/labels", {"sample_id": 0, "label": 0})
        assert code == 409 and body["error"] == "budget"

    def test_metrics_schema_matches_history(self, session, small_dataset):
        truth = small_dataset.hidden_labels("target", "eval")
        session.wait_queue()
        code, row = session.get("/metrics")
        assert code == 200
        report = session.finish(truth)
        assert set(row) == set(report["history"][0])

    def test_pause_resume_and_advance(self, small_dataset):
        s = LiveSession(small_dataset, max_epoch=8, timeout=30.0)
        try:
            truth = small_dataset.hidden_labels("target", "eval")
            code, _ = s.post("/control", {"action": "pause"})
            assert code == 200
            assert s.get("/status")[1]["paused"] is True
            epoch_a = s.get("/status")[1]["epoch"]
            time.sleep(0.3)
            epoch_b = s.get("/status")[1]["epoch"]
            assert epoch_b <= epoch_a + 1   # boundary progression halted
            code, _ = s.post("/control", {"action": "resume"})
            assert code == 200
            assert s.get("/status")[1]["paused"] is False

            # a round opens; answer one item and advance: the round closes
            # with partial labels and the budget only grows by that one
            queue = s.wait_queue()
            first = queue[0]["sample_id"]
            s.post("/labels", {"sample_id": first, "label": int(truth[first])})
            code, _ = s.post("/control", {"action": "advance_round"})
            assert code == 200
            deadline = time.monotonic() + 10
            while s.get("/queue")[1] and time.monotonic() < deadline:
                time.sleep(0.02)
            report = s.finish(truth)
            assert report["budget_used"] == report["budget"]

            code, _ = s.post("/control", {"action": "bogus"})
            assert code == 400
        finally:
            s.bridge.stop()
            s.server.shutdown()


class TestServeCli:
    def test_port_collision_is_clear_error(self, small_dataset, tmp_path):
        import socket
        from modsep.cli import main
        from modsep.dataio import write_dataset
        data = tmp_path / "data"
        write_dataset(small_dataset, data)
        blocker = socket.socket()
        blocker.bind(("127.0.0.1", 0))
        blocker.listen(1)
        port = blocker.getsockname()[1]
        try:
            rc = main(["serve", "--data", str(data),
                       "--out", str(tmp_path / "run"), "--mode", "ada",
                       "--budget", "0.1", "--epochs", "2",
                       "--port", str(port)])
            assert rc == 1
        finally:
            blocker.close()

    def test_sigint_checkpoints_and_exits_cleanly(self, small_dataset,
                                                  tmp_path):
        import signal
        import subprocess
        import sys
        from modsep.dataio import write_dataset
        data = tmp_path / "data"
        write_dataset(small_dataset, data)
        out = tmp_path / "run"
        proc = subprocess.Popen(
            [sys.executable, "-u", "-m", "modsep.cli", "serve",
             "--data", str(data), "--out", str(out), "--mode", "ada",
             "--budget", "0.1", "--epochs", "500", "--port", "0"],
            stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True)
        try:
            deadline = time.monotonic() + 20
            line = ""
            while time.monotonic() < deadline:
                line = proc.stdout.readline()
                if "annotation service on" in line:
                    break
            assert "annotation service on" in line
            time.sleep(0.5)
            proc.send_signal(signal.SIGINT)
            rc = proc.wait(timeout=30)
            assert rc == 0
            assert (out / "checkpoint" / "checkpoint.json").exists()
        finally:
            if proc.poll() is None:
                proc.kill()
