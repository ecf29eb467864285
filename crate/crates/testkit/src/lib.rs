//! Test support: random catalogs, IRs and dialogues, plus reference
//! implementations that the real code is checked against.

pub mod dialogue;
pub mod eval;
pub mod gen;
pub mod selection;

use nl2bi_core::catalog::Catalog;

/// Demo catalog shipped in `docs/catalog.json`.
pub fn demo_catalog() -> Catalog {
    Catalog::from_json(include_str!("../../../docs/catalog.json")).expect("demo catalog parses")
}
