//! Core of plmforge: GF(2) algebra, a dense simulator, circuits, magic-state
//! gadgets, the PLM compiler, coset authentication and the obfuscator.
//!
//! Builds without `std` (with `alloc`) when the default `std` feature is off.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod auth;
pub mod circuit;
pub mod crypto;
pub mod gadget;
pub mod plm;
pub mod f2;
pub mod func;
pub mod obf;
pub mod rng;
pub mod statevec;
pub mod teleport;
pub mod world;
