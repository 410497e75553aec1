import pytest

import replay_triage as rt

REFERENCE_RESPONSE = (
    "[{'statement type': 'CALL',\n'status': 'failed',\n'error': 'Operation canceled and transaction rolled back\n"
    " due to exception.', 'objects': 'ABC1, ABC2'},\n{'statement type': 'CREATE VIEW', 'status': 'failed',\n"
    "'error': 'Connection error', 'objects': 'MN1, MN2'}]"
)


@pytest.fixture(scope="module")
def scenario():
    replay, truth = rt.generate(seed=5, overlap_classes=3, failed_events=300)
    return replay, truth, rt.build_dataset(replay, truth)


def test_metrics():
    assert rt.f1_macro(["a", "b"], ["a", "b"]) == 1.0
    assert rt.f1_macro(["a", "a", "b", "b"], ["a", "b", "b", "b"]) == pytest.approx(11 / 15)
    assert rt.accuracy(["a", "a", "b", "b"], ["a", "b", "b", "b"]) == 0.75
    assert rt.f1_comb(0.6, 1.0) == pytest.approx(0.75)
    with pytest.raises(rt.PreconditionError):
        rt.f1_macro(["a"], ["a", "b"])


def test_generate_and_context(scenario):
    replay, truth, data = scenario
    failed = replay.failed_event_ids()
    assert set(failed) == set(truth)
    assert len(data) == len(truth)
    ctx = replay.context(failed[-1])
    assert ctx["target_event_id"] == failed[-1]
    with pytest.raises(rt.NotFoundError):
        replay.context("no-such-event")


def test_replay_round_trip(scenario, tmp_path):
    replay, _, _ = scenario
    replay.save(tmp_path / "r.jsonl")
    again = rt.Replay.load(tmp_path / "r.jsonl")
    assert again.to_jsonl() == replay.to_jsonl()


def test_parse_reference_response():
    s = rt.parse_summary_response(REFERENCE_RESPONSE)
    assert [g["statement type"] for g in s["groups"]] == ["CALL", "CREATE VIEW"]
    assert s["groups"][1]["objects"] == "MN1, MN2"
    assert s["violations"] == []
    with pytest.raises(rt.ParseError):
        rt.parse_summary_response("no array here")
    long = "[{'statement type': 'CALL', 'status': 'failed', 'error': '%s', 'objects': 'A'}]" % " ".join(
        "w%d" % i for i in range(31)
    )
    s = rt.parse_summary_response(long)
    assert len(s["groups"][0]["error"].split()) == 30
    assert len(s["warnings"]) == 1
    assert "{word_limit}" not in rt.prompt_prefix(30)


def test_summarize_is_deterministic(scenario):
    replay, _, _ = scenario
    target = next(e for e in replay.failed_event_ids() if replay.context(e)["items"])
    assert rt.summarize(replay, target) == rt.summarize(replay, target)


def test_cross_validate_and_compare(scenario):
    _, _, data = scenario
    r = rt.cross_validate(data, mode="em_ss_summary", hyperparameters={"k_neighbors": 3})
    assert len(r["folds"]) == 5
    assert 0.0 <= r["mean_f1_macro"] <= 1.0
    assert r["hyperparameters"]["k_neighbors"] == 3
    with pytest.raises(rt.ValidationError):
        rt.cross_validate(data, mode="bogus")
    rows, table = rt.compare(data, modes=["em_ss"], vectorizers=["tfidf"])
    assert len(rows) == 1
    assert table.count("\n") == 2


def test_train_classify_persist(scenario, tmp_path):
    replay, truth, data = scenario
    model = rt.Model.train(data, mode="em_ss_summary", version="v7")
    assert model.version == "v7"
    assert len(model) == len(data)
    preds = model.classify(replay)
    assert [p["event_id"] for p in preds] == replay.failed_event_ids()
    correct = sum(p["label_id"] == truth[p["event_id"]] for p in preds)
    assert correct / len(preds) > 0.8
    model.save(tmp_path / "m.json")
    assert rt.Model.load(tmp_path / "m.json").classify(replay) == preds
    data.save(tmp_path / "d.jsonl")
    assert rt.Dataset.load(tmp_path / "d.jsonl").labels() == data.labels()
