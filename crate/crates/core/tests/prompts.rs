//! Rendered prompts for the reference intent-classification inputs must match
//! the stored golden files byte for byte.

use inca_core::ecl::ClassId;
use inca_core::prompt::{
    default_few_shot, parse_label, parse_tags, render_prediction_prompt, render_summary_prompt,
    render_tag_prompt, LabelMatch, PromptCandidate, PromptWording, DEFAULT_MAX_TAGS,
};

fn golden(name: &str) -> String {
    let path = format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

#[path = "fixtures/reference.rs"]
mod reference;
use reference::*;

#[test]
fn summarization_prompt_matches_golden() {
    let rendered = render_summary_prompt(&PromptWording::default(), &CREDIT_CARD_QUERIES);
    assert_eq!(rendered, golden("summarization_prompt.txt"));
}

#[test]
fn tag_prompt_matches_golden() {
    let rendered = render_tag_prompt(TAG_QUERY, &default_few_shot());
    assert_eq!(rendered, golden("tag_generation_prompt.txt"));
}

#[test]
fn prediction_prompt_matches_golden() {
    let candidates = [
        PromptCandidate {
            name: "direct_deposit",
            summary: DIRECT_DEPOSIT,
        },
        PromptCandidate {
            name: "income",
            summary: INCOME,
        },
        PromptCandidate {
            name: "payday",
            summary: PAYDAY,
        },
    ];
    let rendered =
        render_prediction_prompt(&PromptWording::default(), PREDICTION_QUERY, &candidates);
    assert_eq!(rendered, golden("prediction_prompt.txt"));
}

#[test]
fn reference_outputs_parse() {
    assert_eq!(
        parse_tags(
            "airline fees, carry-on, delta airlines, travel, pay, luggage",
            DEFAULT_MAX_TAGS
        ),
        [
            "airline fees",
            "carry-on",
            "delta airlines",
            "travel",
            "pay",
            "luggage"
        ]
    );
    let cands = [
        (ClassId(0), "direct_deposit"),
        (ClassId(1), "income"),
        (ClassId(2), "payday"),
    ];
    assert_eq!(
        parse_label(" direct_deposit", &cands),
        LabelMatch::Exact(ClassId(0))
    );
}

#[test]
fn topic_wording_changes_only_the_subject() {
    let intent = render_summary_prompt(&PromptWording::intent(), &["q"]);
    let topic = render_summary_prompt(&PromptWording::topic(), &["q"]);
    assert_eq!(intent.replace("of the intent.", "of the topic."), topic);
}
