//! Desk-scale toolkit for truth-table reductions between classes of
//! sequences: formula analysis, lazily evaluated oracles, reduction
//! families, adversary oracle constructions, deficiency switching and
//! finite measure machinery.

pub mod adversary;
pub mod bitseq;
pub mod cli;
pub mod formula;
pub mod reduction;
pub mod seqfun;
pub mod switcher;
