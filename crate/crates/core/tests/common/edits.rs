//! Scripted adversarial runs of the edit pipeline.

use ilcl_core::env::Observation;
use ilcl_core::explore::{apply_mechanically, Edit, EditSection, EditStatus, Extractor, Record, Trajectory};
use ilcl_core::forest::{Mode, TodoPath, INIT_STATE};
use ilcl_core::llm::{CallConfig, Cassette, Player, TemplateId};
use ilcl_core::schema::{parse_document, render_document, validate_document, Schema};
use proptest::prelude::*;

const START: &str = "#### Observations

- Kitchen:
  - objects: table, knife (on table)
  - west: Nothing
  - east: Nothing
  - north: Nothing
  - south: wooden door to Hall

- Hall:
  - objects: Nothing
  - west: Nothing
  - east: Unknown
  - north: wooden door to Kitchen
  - south: Nothing

#### Action Rules
";

#[derive(Debug, Clone, Copy)]
pub enum Proposal {
    NewRoom,
    Contradiction,
    DanglingExit,
    NewObject,
}

#[derive(Debug, Clone, Copy)]
pub enum Verdict {
    Accept,
    Reject,
    Revise,
}

#[derive(Debug, Clone, Copy)]
pub enum BadRewrite {
    NoTag,
    BrokenFormat,
    Leak,
}

#[derive(Debug, Clone)]
pub struct Case {
    pub proposals: Vec<(Proposal, Verdict, bool)>,
    pub bad_rewrites: Vec<BadRewrite>,
}

pub fn case() -> impl Strategy<Value = Case> {
    let proposal = prop_oneof![
        Just(Proposal::NewRoom),
        Just(Proposal::Contradiction),
        Just(Proposal::DanglingExit),
        Just(Proposal::NewObject)
    ];
    let verdict = prop_oneof![Just(Verdict::Accept), Just(Verdict::Reject), Just(Verdict::Revise)];
    let bad = prop_oneof![Just(BadRewrite::NoTag), Just(BadRewrite::BrokenFormat), Just(BadRewrite::Leak)];
    (
        prop::collection::vec((proposal, verdict, any::<bool>()), 1..6),
        prop::collection::vec(bad, 0..=3),
    )
        .prop_map(|(proposals, bad_rewrites)| Case {
            proposals,
            bad_rewrites,
        })
}

fn room(name: &str, object: &str) -> String {
    format!(
        "Add:\n- {name}:\n  - objects: {object}\n  - west: Nothing\n  - east: Nothing\n  - north: Nothing\n  - south: Nothing"
    )
}

/// The edit body and the tokens only it contains.
fn body(p: Proposal, tag: &str) -> (String, Vec<String>) {
    match p {
        Proposal::NewRoom => (room(&format!("Vault{tag}"), &format!("gizmo{tag}")), vec![
            format!("Vault{tag}"),
            format!("gizmo{tag}"),
        ]),
        Proposal::Contradiction => ("Update:\n- Kitchen:\n  - south: Nothing".into(), Vec::new()),
        Proposal::DanglingExit => (
            format!("Update:\n- Hall:\n  - east: stone arch to Nowhere{tag}"),
            vec![format!("Nowhere{tag}")],
        ),
        Proposal::NewObject => (
            format!("Update:\n- Hall:\n  - objects: sprocket{tag}"),
            vec![format!("sprocket{tag}")],
        ),
    }
}

fn knowledge(text: &str) -> String {
    format!("<thought>Merged.</thought>\n<knowledge>\n{text}\n</knowledge>")
}

fn trajectory() -> Trajectory {
    Trajectory {
        id: "001".into(),
        mode: Mode::Action,
        origin_path: TodoPath::new(INIT_STATE, &["look"]),
        initial_observation: None,
        records: vec![Record::new("look", Observation::new("-= Kitchen =-"))],
        replayed_prefix_len: 0,
        truncated: false,
    }
}

pub fn run_case(schema: &Schema, case: &Case) -> Result<(), TestCaseError> {
    let doc = parse_document(START, schema).expect("start document parses");
    let mut script: Vec<(TemplateId, String)> = Vec::new();
    let mut listed = String::new();
    let mut surviving_bodies = Vec::new();
    let mut rejected_tokens = Vec::new();
    for (i, (p, verdict, stutter)) in case.proposals.iter().enumerate() {
        let (b, tokens) = body(*p, &format!("R{i}"));
        listed.push_str(&format!("<modification{n}>\n{b}\n</modification{n}>\n", n = i + 1));
        if *stutter {
            script.push((TemplateId::ExtractorCheck, "I am not sure.".into()));
        }
        let answer = match verdict {
            Verdict::Accept => {
                surviving_bodies.push(b);
                "<decision>Accept</decision>".to_string()
            }
            Verdict::Reject => {
                rejected_tokens.extend(tokens);
                "<decision>Reject</decision>".to_string()
            }
            Verdict::Revise => {
                rejected_tokens.extend(tokens);
                let revised = room(&format!("Loft{i}"), &format!("widget{i}"));
                surviving_bodies.push(revised.clone());
                format!("<decision>Revise</decision>\n<content>\n{revised}\n</content>")
            }
        };
        script.push((TemplateId::ExtractorCheck, answer));
    }
    script.insert(0, (TemplateId::ExtractorObsEdits, listed));

    let (merged, _) = apply_mechanically(&doc, schema, &surviving_bodies);
    let good = render_document(&merged, schema).expect("merged document renders");
    for bad in &case.bad_rewrites {
        let text = match bad {
            BadRewrite::NoTag => "Here is the new document, trust me.".to_string(),
            BadRewrite::BrokenFormat => knowledge("#### Observations\n\n- Kitchen:\n  - south: sideways\n"),
            BadRewrite::Leak => {
                let name = rejected_tokens.first().map(String::as_str).unwrap_or("Annex");
                let observations = good.split("#### Action Rules").next().unwrap().trim_end();
                knowledge(&format!(
                    "{observations}\n\n- {name}:\n  - objects: Nothing\n  - west: Nothing\n  - east: Nothing\n  - north: Nothing\n  - south: Nothing\n\n#### Action Rules\n"
                ))
            }
        };
        script.push((TemplateId::ExtractorApply, text));
    }
    script.push((TemplateId::ExtractorApply, knowledge(&good)));

    let mut llm = Player::new(Cassette::scripted(script), false);
    let extractor = Extractor {
        schema,
        background: "",
        call: CallConfig::default(),
        prompt_records: 40,
    };
    let traj = trajectory();
    let mut edits: Vec<Edit> = extractor.extract(&mut llm, &doc, &traj, EditSection::Observations).unwrap();
    prop_assert_eq!(edits.len(), case.proposals.len());
    for e in edits.iter_mut() {
        extractor.check(&mut llm, &doc, &traj, e).unwrap();
        prop_assert_ne!(e.status, EditStatus::Proposed);
    }
    let applied = extractor.apply(&mut llm, &doc, &edits).unwrap();

    prop_assert!(validate_document(&applied.document, schema).is_empty());
    let text = render_document(&applied.document, schema).unwrap();
    for t in &rejected_tokens {
        prop_assert!(!text.contains(t.as_str()), "rejected '{}' leaked into\n{}", t, text);
    }
    let refused = |b: &BadRewrite| !matches!(b, BadRewrite::Leak) || !rejected_tokens.is_empty();
    let all_refused = case.bad_rewrites.len() >= 3 && case.bad_rewrites.iter().all(refused);
    let any_survive = edits.iter().any(|e| e.survives());
    prop_assert_eq!(applied.fallback, any_survive && all_refused);
    Ok(())
}

