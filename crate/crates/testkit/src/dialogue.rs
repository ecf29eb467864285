//! Reference model of the dialogue resolution loop.

use nl2bi_core::catalog::Catalog;
use nl2bi_core::dialogue::{
    resolve, Label, LexicalClassifier, SessionState, SlotMergeResolver, Source,
};

use crate::gen::turn_text;

/// Replays `turns` through a fresh session and checks every step against a
/// label-only model of the history. Returns a description of the first
/// mismatch.
pub fn check_dialogue(catalog: &Catalog, turns: &[(bool, usize)]) -> Result<(), String> {
    let lexicon = catalog.lexicon();
    let classifier = LexicalClassifier { lexicon };
    let resolver = SlotMergeResolver { lexicon };
    let mut session = SessionState::new("prop");
    // Model: completeness of every history entry.
    let mut model: Vec<bool> = Vec::new();

    for (step, &turn) in turns.iter().enumerate() {
        let text = turn_text(turn);
        session.push(text, lexicon, &classifier);
        model.push(turn.0);
        let fail = |what: String| Err(format!("step {step} ({text:?}): {what}"));

        let label = session.history.last().map(|u| u.label);
        let want = if turn.0 {
            Label::Complete
        } else {
            Label::Incomplete
        };
        if label != Some(want) {
            return fail(format!("classified {label:?}, pool says {want:?}"));
        }

        let before = session.history.clone();
        let r = match resolve(&mut session, &classifier, &resolver, lexicon) {
            Ok(r) => r,
            Err(e) => return fail(format!("resolve failed: {e}")),
        };
        let anchor = model.iter().rposition(|c| *c);

        if turn.0 {
            if r.source != Source::Direct || r.text.as_deref() != Some(text) {
                return fail(format!("expected direct, got {r:?}"));
            }
            if session.history != before {
                return fail("direct resolution changed the history".into());
            }
        } else if anchor.is_none() {
            if r.source != Source::None || r.text.is_some() {
                return fail(format!("expected none, got {r:?}"));
            }
            if session.history != before {
                return fail("unresolved turn changed the history".into());
            }
        } else {
            if r.source != Source::Predicted || r.anchor != anchor {
                return fail(format!("expected prediction from {anchor:?}, got {r:?}"));
            }
            if session.history.len() != before.len() + 1
                || session.history[..before.len()] != before[..]
            {
                return fail("prediction must append exactly one entry".into());
            }
            let added = session.history.last().expect("appended");
            let last_ts = before.last().map_or(0, |u| u.timestamp);
            if !added.predicted
                || added.label != Label::Complete
                || added.timestamp != last_ts + 1
                || Some(added.text.as_str()) != r.text.as_deref()
                || !added.terms.is_complete()
            {
                return fail(format!("bad predicted entry {added:?}"));
            }
            model.push(true);
        }
    }
    Ok(())
}
