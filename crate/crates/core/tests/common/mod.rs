//! Generators shared by the property tests and the acceptance run.
#![allow(dead_code)]

pub mod button;
pub mod edits;
pub mod forest_ops;
pub mod replay;

use ilcl_core::schema::{
    builtin, parse_schema, ActionRule, AttrValue, Document, Entity, EntityTypeSpec, Multiplicity, Schema, SlotDomain,
};
use proptest::prelude::*;

pub const WORDS: [&str; 16] = [
    "red", "apple", "brass", "key", "wooden", "table", "old", "lamp", "blue", "door", "small", "box", "iron",
    "gate", "green", "shelf",
];
pub const NAMES: [&str; 10] = [
    "Kitchen", "Hall", "Pantry", "Cellar", "Garden", "Study", "Attic", "Porch", "Garage", "Bedroom",
];

pub fn builtin_schemas() -> Vec<Schema> {
    ["roomworld", "textworld", "alfworld", "craftworld"]
        .iter()
        .map(|n| parse_schema(n, builtin::by_name(n).unwrap()).unwrap())
        .collect()
}

fn phrase(min: usize, max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(&WORDS[..]), min..=max).prop_map(|w| w.join(" "))
}

fn sentence() -> impl Strategy<Value = String> {
    (phrase(1, 6), prop::option::of(phrase(1, 3)), any::<bool>()).prop_map(|(a, b, dot)| {
        let mut s = a;
        if let Some(b) = b {
            s.push_str(", ");
            s.push_str(&b);
        }
        if dot {
            s.push('.');
        }
        s
    })
}

fn keys_for(spec: &EntityTypeSpec, n: usize) -> BoxedStrategy<Vec<String>> {
    if spec.label.is_some() {
        prop::collection::btree_set((0..20i32, 0..20i32), n..=n)
            .prop_map(|s| s.into_iter().map(|(x, y)| format!("{x}, {y}")).collect())
            .boxed()
    } else {
        prop::collection::btree_set((0..NAMES.len(), 0..4usize), n..=n)
            .prop_map(|s| {
                s.into_iter()
                    .map(|(i, k)| if k == 0 { NAMES[i].to_string() } else { format!("{} {k}", NAMES[i]) })
                    .collect()
            })
            .boxed()
    }
}

#[derive(Debug, Clone)]
enum Pick {
    Unknown(Option<String>),
    Nothing,
    Known(Vec<(String, usize)>),
}

fn slot_value(slot: &ilcl_core::schema::AttrSlot, keys: &[String], pick: &Pick) -> AttrValue {
    let many = slot.multiplicity == Multiplicity::Many;
    let render_item = |(text, target): &(String, usize)| match &slot.domain {
        SlotDomain::EntityRef { qualified: true, .. } => format!("{text} to {}", keys[*target % keys.len()]),
        SlotDomain::EntityRef { qualified: false, .. } => keys[*target % keys.len()].clone(),
        SlotDomain::Enumerated(options) => options[*target % options.len()].clone(),
        SlotDomain::FreeText => text.clone(),
    };
    let known = |items: &[(String, usize)]| {
        if many {
            let mut seen: Vec<String> = Vec::new();
            for it in items {
                let v = render_item(it);
                if !seen.contains(&v) {
                    seen.push(v);
                }
            }
            AttrValue::KnownList(seen)
        } else {
            AttrValue::Known(render_item(&items[0]))
        }
    };
    match pick {
        Pick::Unknown(q) if slot.unknown_allowed => match (&slot.domain, q) {
            (SlotDomain::EntityRef { qualified: true, .. }, Some(q)) => AttrValue::Unknown(Some(q.clone())),
            _ => AttrValue::Unknown(None),
        },
        Pick::Nothing if slot.nothing_allowed => AttrValue::Nothing,
        Pick::Known(items) => known(items),
        _ => known(&[("old box".to_string(), 0)]),
    }
}

fn pick() -> impl Strategy<Value = Pick> {
    prop_oneof![
        1 => prop::option::of(phrase(1, 3)).prop_map(Pick::Unknown),
        1 => Just(Pick::Nothing),
        4 => prop::collection::vec((phrase(1, 3), any::<usize>()), 1..4).prop_map(Pick::Known),
    ]
}

fn rule() -> impl Strategy<Value = ActionRule> {
    (phrase(1, 3), sentence(), sentence(), prop::option::of(sentence())).prop_map(|(a, r, k, n)| ActionRule {
        action: a,
        requirements: r,
        key_result: k,
        note: n.unwrap_or_default(),
    })
}

/// Valid documents for `schema`: every slot filled, references pointing at
/// generated keys.
pub fn document(schema: Schema) -> impl Strategy<Value = Document> {
    let spec = schema.entity_types[0].clone();
    let slots = spec.slots.clone();
    let with_rules = schema.has_action_rules;
    (1..6usize)
        .prop_flat_map(move |n| {
            (
                keys_for(&spec, n),
                prop::collection::vec(prop::collection::vec(pick(), slots.len()), n),
                prop::collection::vec(rule(), if with_rules { 0..4 } else { 0..1 }),
                Just(spec.clone()),
            )
        })
        .prop_map(move |(keys, picks, mut rules, spec)| {
            let mut doc = Document::empty();
            for (key, row) in keys.iter().zip(picks) {
                let mut e = Entity::new(spec.name.clone(), key.clone());
                for (slot, p) in spec.slots.iter().zip(row) {
                    e = e.with(slot.name.clone(), slot_value(slot, &keys, &p));
                }
                doc.entities.push(e);
            }
            let mut seen = Vec::new();
            rules.retain(|r| {
                let fresh = !seen.contains(&r.action);
                seen.push(r.action.clone());
                fresh
            });
            doc.action_rules = rules;
            doc
        })
}
