//! Decision support for bank telemarketing campaigns.
//!
//! A CART response model is grown from historical contact records
//! ([`cart`]), flattened into an if-then inference engine ([`rules`]) and
//! queried by an advisor that works from partial evidence about a customer
//! ([`advisor`]). Reference classifiers ([`baselines`]) and the evaluation
//! harness ([`metrics`]) back the model comparison; [`kb`] persists models,
//! rule sets and reports; [`interfaces`] exposes everything as a CLI and an
//! HTTP service.

pub mod advisor;
pub mod baselines;
pub mod cart;
pub mod dataset;
pub mod fixture;
pub mod interfaces;
pub mod kb;
pub mod metrics;
pub mod model;
pub mod rules;

pub use cart::{ClassCounts, Criterion, GrowParams, Outcome, Tree};
pub use dataset::{Dataset, Dialect, EncodedRecord, Evidence, Label, Predicate, Schema};
