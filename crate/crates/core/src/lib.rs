//! Core of a service-oriented middleware: nested services addressed by
//! handles, an XML call protocol split into packets, metadata documents,
//! leveled access control, autonomic dynamic links, a mediated-transaction
//! model and a concept store.

pub mod access;
pub mod admin;
pub mod autonomic;
pub mod concept;
pub mod metadata;
pub mod model;
pub mod node;
pub mod par;
pub mod service;
pub mod trust;
pub mod wire;
pub mod xml;
