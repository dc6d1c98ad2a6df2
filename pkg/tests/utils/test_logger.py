import json
import logging

from langdepth.utils.logger import (
    ColoredFormatter,
    JsonFormatter,
    get_log_config,
    get_run_id,
    set_run_id,
    setup_logging,
)


def _record(message="hello", **extra):
    record = logging.LogRecord(
        "langdepth", logging.INFO, __file__, 10, message, (), None
    )
    for key, value in extra.items():
        setattr(record, key, value)
    return record


def test_log_config_merges_file_section():
    config = get_log_config({"level": "DEBUG", "file": {"enabled": True}})
    assert config["level"] == "DEBUG"
    assert config["file"]["enabled"] is True
    assert config["file"]["backup_count"] == 5


def test_json_formatter_carries_run_id_and_metrics():
    line = JsonFormatter().format(
        _record(run_id="abc", metrics={"loss": 0.5})
    )
    data = json.loads(line)
    assert data["message"] == "hello"
    assert data["run_id"] == "abc"
    assert data["metrics"] == {"loss": 0.5}


def test_colored_formatter_keeps_message():
    formatter = ColoredFormatter("%(levelname)s %(message)s")
    assert formatter.format(_record("[trainer] step")).endswith(
        "[trainer] step"
    )


def test_run_id_roundtrip():
    run_id = set_run_id("run-1")
    assert run_id == "run-1"
    assert get_run_id() == "run-1"
    generated = set_run_id()
    assert len(generated) == 12 and generated != "run-1"


def test_setup_logging_writes_json_file(config_data, tmp_path):
    setup_logging(config_data["logging"])
    set_run_id("file-run")
    logging.getLogger("langdepth.test").info("[test] written")
    for handler in logging.getLogger().handlers:
        handler.flush()
    path = tmp_path / "logs" / "test.log"
    lines = [json.loads(x) for x in path.read_text().splitlines()]
    assert any(
        x["message"] == "[test] written" and x["run_id"] == "file-run"
        for x in lines
    )
    setup_logging()


def test_json_formatter_extracts_component():
    tagged = json.loads(JsonFormatter().format(_record("[trainer] step 3")))
    plain = json.loads(JsonFormatter().format(_record("no tag")))
    assert tagged["component"] == "trainer"
    assert plain["component"] is None
    assert "metrics" not in plain
