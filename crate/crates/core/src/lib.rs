//! Model checking for turn-based and concurrent stochastic games.
//!
//! Models are read from a line-oriented text format ([`format`]), queries
//! from a fragment of rPATL ([`query`]), and answered by value iteration
//! over per-state one-shot games ([`engines`], [`matrix`]).

pub mod checker;
pub mod engines;
pub mod error;
pub mod format;
pub mod game;
pub mod linalg;
pub mod lp;
pub mod matrix;
pub mod query;

pub use checker::{check, CheckError, CheckOptions, CheckOutcome, Value, Values};
pub use error::{ParseError, ParseErrorKind};
pub use format::{parse_game, parse_game_bytes, serialize_game};
pub use game::{as_mdp, coalition_view, validate, CoalitionSpec, GameKind, GameModel, Player, StateSet, TwoPlayerGame};
pub use query::{parse_props, parse_query, print_query, PlayerNames, Query};
