mod common;

use proptest::prelude::*;
use std::sync::Arc;

use pcomp_core::compression::Templates;
use pcomp_core::inference::{classify_question, normalize_type_reply, resolve_type};
use pcomp_core::llm::{LlmClient, Pattern, ReplayBackend, ReplayTranscript, TranscriptLine};

fn scripted(reply: &str) -> LlmClient {
    let line = TranscriptLine::pattern(Pattern::One("Question: ".into()), Some("classify"), reply);
    LlmClient::new(
        Arc::new(ReplayBackend::new(ReplayTranscript::from_lines([line]).unwrap())),
        common::tokenizer(),
    )
}

#[test]
fn scripted_replies() {
    let catalog = common::catalog();
    let prompt = Templates::builtin().render_classification_prompt(&catalog).unwrap();
    for (reply, want, fallback) in [
        ("attr", "attr", false),
        (" Attr.\n", "attr", false),
        ("GLOBAL: weather", "global", false),
        ("\"rel\"", "rel", false),
        ("banana", "attr", true),
        ("", "attr", true),
    ] {
        let c = classify_question("What is the color of bar?", &prompt, &catalog, &scripted(reply), "attr").unwrap();
        assert_eq!((c.type_name.as_str(), c.fallback), (want, fallback), "{reply:?}");
        assert_eq!(c.raw_reply, reply);
    }
}

#[test]
fn classification_prompt_carries_the_question() {
    let catalog = common::catalog();
    let prompt = Templates::builtin().render_classification_prompt(&catalog).unwrap();
    let client = common::client(&["gqa/transcripts/classify.jsonl"]);
    let c = classify_question("What color is the umbrella?", &prompt, &catalog, &client, "attr").unwrap();
    assert_eq!(c.type_name, "attr");
    assert_eq!(client.calls(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn any_reply_resolves_to_a_catalog_member(reply in "\\PC{0,40}|(obj|cat|attr|rel|global)[ .:!?\\n]{0,3}\\PC{0,10}") {
        let catalog = common::catalog();
        let (t, fallback) = resolve_type(&reply, &catalog, "attr");
        prop_assert!(catalog.contains(&t));
        match normalize_type_reply(&reply, &catalog) {
            Some(n) => {
                prop_assert!(!fallback);
                prop_assert_eq!(n, t);
            }
            None => {
                prop_assert!(fallback);
                prop_assert_eq!(t, "attr");
            }
        }
    }
}
