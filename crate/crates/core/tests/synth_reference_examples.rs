use proxylm_core::backend::{RecordedBackend, SamplingParams};
use proxylm_core::corpus::parse_turns;
use proxylm_core::synth::{
    filter_example, generate_conversation, transform_example, PromptKind, PromptTemplate,
    VariableAssignment,
};
use proxylm_core::{Example, Source};
use serde_json::Value;
use std::path::PathBuf;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn examples() -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture("reference_examples.json")).unwrap()).unwrap()
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn direct_assignment(v: &Value) -> VariableAssignment {
    let s = |k: &str| v[k].as_str().unwrap().to_owned();
    VariableAssignment::new(s("age"), s("gender"), s("time"), s("day"), s("chat_app"))
        .with_receiver(s("receiver"))
        .with_topic(s("topic"))
        .unwrap()
}

#[test]
fn direct_generation_query_matches_quoted_text() {
    let v = &examples()["direct_example"];
    let rendered = PromptTemplate::builtin(PromptKind::GenConversation)
        .render_assignment(&direct_assignment(v))
        .unwrap();
    assert_eq!(squash(&rendered), squash(v["query"].as_str().unwrap()));
}

#[test]
fn conversion_query_matches_quoted_text() {
    let v = &examples()["convert_example"];
    let rendered = PromptTemplate::builtin(PromptKind::Transform)
        .render_text(v["article"].as_str().unwrap())
        .unwrap();
    assert_eq!(squash(&rendered), squash(v["query"].as_str().unwrap()));
}

#[test]
fn filter_examples_replay() {
    let backend = RecordedBackend::from_jsonl(fixture("recorded_responses.jsonl")).unwrap();
    let v = examples();
    for (key, want) in [("filter_positive", true), ("filter_negative", false)] {
        let list = v[key].as_array().unwrap();
        assert_eq!(list.len(), 4);
        for s in list {
            let ex = Example::new(s.as_str().unwrap(), Source::Raw).unwrap();
            assert_eq!(filter_example(&backend, &ex, SamplingParams::default()).unwrap(), want, "{s}");
        }
    }
}

#[test]
fn recorded_outputs_parse_into_turns() {
    let backend = RecordedBackend::from_jsonl(fixture("recorded_responses.jsonl")).unwrap();
    let v = examples();
    let a = direct_assignment(&v["direct_example"]);
    let chat = generate_conversation(&backend, &a, SamplingParams::default()).unwrap();
    assert_eq!(parse_turns(chat.text()).len(), 8);
    assert_eq!(chat.meta["receiver"], "your family");
    assert_eq!(chat.meta["day"], "vacation day");

    let article = Example::new(v["convert_example"]["article"].as_str().unwrap(), Source::Filtered).unwrap();
    let converted = transform_example(&backend, &article, SamplingParams::default()).unwrap();
    let turns = parse_turns(converted.text());
    assert_eq!(turns.len(), 11);
    assert_eq!(turns[0].speaker, "Me");
    assert!(turns[0].text.starts_with("Hey, I saw your ad for the puppies"));
}
