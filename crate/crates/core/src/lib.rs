#![no_std]

extern crate alloc;

pub mod catalog;
pub mod dialogue;
pub mod ir;
pub mod pipeline;
pub mod planner;
pub mod selector;
pub mod sql_lex;
pub mod sqlgen;
pub mod terms;
pub mod time;
