import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from trailseg.errors import ParseError, PortInUse
from trailseg.service import AnnotationStore, check_port_free, create_app
from trailseg.slic import decode_rle, labels_to_mask

SLIC = dict(slic_k=12, slic_m=10.0, slic_iterations=4)


@pytest.fixture
def client(tiny_manifest, tmp_path):
    app = create_app(tiny_manifest, sessions_dir=tmp_path / "sessions", **SLIC)
    with TestClient(app) as c:
        yield c


def store_for(tiny_manifest, sessions_dir):
    return AnnotationStore(tiny_manifest, sessions_dir=sessions_dir, **SLIC)


class TestFrameListing:
    def test_lists_every_manifest_frame(self, client, tiny_manifest):
        from trailseg.dataset import load_manifest

        frames = client.get("/api/frames").json()
        records = load_manifest(tiny_manifest)
        assert [f["id"] for f in frames] == [r.frame_id for r in records]
        assert all(not f["annotated"] for f in frames)
        assert all(f["image_url"].endswith(f"/{f['id']}/image.png") for f in frames)
        assert [f["lux"] for f in frames] == [r.lux for r in records]

    def test_annotated_flag_flips_after_save(self, client):
        fid = client.get("/api/frames").json()[0]["id"]
        client.post(f"/api/frames/{fid}/labels", json={"selected": [0]})
        frames = client.get("/api/frames").json()
        flags = {f["id"]: f["annotated"] for f in frames}
        assert flags[fid] is True
        assert sum(flags.values()) == 1


class TestImage:
    def test_png_bytes_decode(self, client):
        fid = client.get("/api/frames").json()[0]["id"]
        resp = client.get(f"/api/frames/{fid}/image.png")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        img = Image.open(io.BytesIO(resp.content))
        assert img.size == (32, 32)

    def test_unknown_frame_404(self, client):
        resp = client.get("/api/frames/zzz/image.png")
        assert resp.status_code == 404
        assert "detail" in resp.json()


class TestSuperpixels:
    def test_rle_and_boundaries(self, client):
        fid = client.get("/api/frames").json()[0]["id"]
        obj = client.get(f"/api/frames/{fid}/superpixels").json()
        labels = decode_rle(obj["rle"])
        assert labels.shape == (32, 32)
        assert labels.max() + 1 == obj["n_segments"]
        assert obj["params"] == {"k": 12, "m": 10.0, "iterations": 4}
        assert set(obj["boundaries"]) == {str(i) for i in range(obj["n_segments"])}
        for polys in obj["boundaries"].values():
            assert polys and all(len(v) == 2 for poly in polys for v in poly)

    def test_unknown_frame_404(self, client):
        assert client.get("/api/frames/nope/superpixels").status_code == 404


class TestLabels:
    def test_get_before_any_save(self, client):
        fid = client.get("/api/frames").json()[0]["id"]
        obj = client.get(f"/api/frames/{fid}/labels").json()
        assert obj == {"frame_id": fid, "selected": [], "timestamp": None, "annotator": None}

    def test_post_then_get_round_trip(self, client):
        fid = client.get("/api/frames").json()[0]["id"]
        resp = client.post(
            f"/api/frames/{fid}/labels",
            json={"selected": [4, 1, 4], "annotator": "alice"},
        )
        assert resp.status_code == 200
        saved = resp.json()
        assert saved["selected"] == [1, 4]  # sorted, deduplicated
        assert saved["annotator"] == "alice"
        assert saved["timestamp"] is not None
        assert client.get(f"/api/frames/{fid}/labels").json() == saved

    def test_last_writer_wins(self, client):
        fid = client.get("/api/frames").json()[0]["id"]
        client.post(f"/api/frames/{fid}/labels", json={"selected": [0, 1]})
        second = client.post(f"/api/frames/{fid}/labels", json={"selected": [2]}).json()
        assert client.get(f"/api/frames/{fid}/labels").json()["selected"] == [2]
        assert second["selected"] == [2]

    def test_unknown_segment_rejected_with_400(self, client):
        fid = client.get("/api/frames").json()[0]["id"]
        n = client.get(f"/api/frames/{fid}/superpixels").json()["n_segments"]
        resp = client.post(f"/api/frames/{fid}/labels", json={"selected": [n]})
        assert resp.status_code == 400
        assert "detail" in resp.json()
        # The bad write must not leave a session behind.
        assert client.get(f"/api/frames/{fid}/labels").json()["selected"] == []

    def test_unknown_frame_404(self, client):
        assert client.post("/api/frames/zzz/labels", json={"selected": []}).status_code == 404


class TestMaskExport:
    def test_mask_matches_labels_to_mask(self, client, tiny_manifest, tmp_path):
        fid = client.get("/api/frames").json()[0]["id"]
        client.post(f"/api/frames/{fid}/labels", json={"selected": [1, 4]})
        resp = client.get(f"/api/frames/{fid}/mask.png")
        assert resp.status_code == 200

        store = store_for(tiny_manifest, tmp_path / "sessions")
        expected = labels_to_mask(store.superpixels(fid), {1, 4})
        got = np.asarray(Image.open(io.BytesIO(resp.content)))
        np.testing.assert_array_equal(got, expected)

        buf = io.BytesIO()
        Image.fromarray(expected, mode="L").save(buf, format="PNG")
        assert resp.content == buf.getvalue()

    def test_unannotated_mask_is_blank(self, client):
        fid = client.get("/api/frames").json()[0]["id"]
        resp = client.get(f"/api/frames/{fid}/mask.png")
        mask = np.asarray(Image.open(io.BytesIO(resp.content)))
        assert (mask == 0).all()


class TestPersistence:
    def test_sessions_survive_restart(self, tiny_manifest, tmp_path):
        sessions = tmp_path / "sessions"
        app = create_app(tiny_manifest, sessions_dir=sessions, **SLIC)
        with TestClient(app) as c:
            fid = c.get("/api/frames").json()[0]["id"]
            saved = c.post(f"/api/frames/{fid}/labels", json={"selected": [3, 5]}).json()

        fresh = create_app(tiny_manifest, sessions_dir=sessions, **SLIC)
        with TestClient(fresh) as c:
            assert c.get(f"/api/frames/{fid}/labels").json() == saved
            frames = c.get("/api/frames").json()
            assert {f["id"]: f["annotated"] for f in frames}[fid] is True

    def test_store_layout_one_json_per_frame(self, tiny_manifest, tmp_path):
        sessions = tmp_path / "sessions"
        store = store_for(tiny_manifest, sessions)
        fid = store.order[0]
        store.save_session(fid, [2, 0])
        assert (sessions / f"{fid}.json").is_file()
        loaded = store.load_session(fid)
        assert loaded.selected == [0, 2]
        assert store.load_session(store.order[1]) is None


class TestStartup:
    def test_unreadable_manifest_aborts(self, tmp_path):
        bad = tmp_path / "manifest.jsonl"
        bad.write_text("{broken\n")
        with pytest.raises(ParseError):
            create_app(bad, sessions_dir=tmp_path / "s")

    def test_port_probe(self):
        import socket

        with socket.socket() as taken:
            taken.bind(("127.0.0.1", 0))
            taken.listen(1)
            port = taken.getsockname()[1]
            with pytest.raises(PortInUse):
                check_port_free("127.0.0.1", port)
        check_port_free("127.0.0.1", port)  # freed now
