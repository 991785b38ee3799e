import pytest

from upp_calibration_langgraph.errors import DeviceFileError
from upp_calibration_langgraph.utils import (
    parse_json_document,
    read_json,
    seal_payload,
    unseal_payload,
    write_json,
)


class TestParseJsonDocument:
    def test_plain_document(self):
        assert parse_json_document('{"n_modes": 4, "seed": 2}') == {"n_modes": 4, "seed": 2}

    @pytest.mark.parametrize("content", [
        '```json\n{"n_modes": 4}\n```',
        'device: {"n_modes": 4}',
        '{"n_modes": 4} trailing',
        '{"n_modes": 4',
        "",
    ])
    def test_rejects_anything_but_json(self, content):
        with pytest.raises(DeviceFileError):
            parse_json_document(content, source="device.json")

    def test_rejects_bytes(self):
        with pytest.raises(DeviceFileError):
            parse_json_document(b'{"n_modes": 4}')

    def test_error_names_source(self):
        with pytest.raises(DeviceFileError, match="model.json"):
            parse_json_document("not json", source="model.json")


class TestFiles:
    def test_write_is_canonical(self, tmp_path):
        path = write_json(tmp_path / "doc.json", {"b": 1, "a": [1.5, 2]})
        assert path.read_text().startswith('{\n  "a"')
        assert read_json(path) == {"a": [1.5, 2], "b": 1}

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "doc.json"
        path.write_text("{'a': 1}")
        with pytest.raises(DeviceFileError):
            read_json(path)

    def test_corrupt_sealed_section(self):
        blob = seal_payload({"theta0": [0.1, 0.2]})
        assert unseal_payload(blob) == {"theta0": [0.1, 0.2]}
        with pytest.raises(DeviceFileError):
            unseal_payload(blob[:-8] + "AAAAAAAA")
