//! Input states for `obf-eval`.
//!
//! A label string has one character per qubit: `0`, `1`, `+`, `-`, `i`
//! (`|0> + i|1>`) or `j` (`|0> - i|1>`). `bell` pairs each input qubit with its
//! own reference qubit; `random:SEED` draws a state of the inputs and one
//! reference qubit.

use plmforge_core::rng::SplitRng;
use plmforge_core::statevec::{StateError, StateVector};

#[derive(Debug, thiserror::Error)]
pub enum InputError {
    #[error("label `{label}` has {got} characters, circuit has {want} qubits")]
    Width { label: String, got: usize, want: usize },
    #[error("unknown state label `{0}`; use 0 1 + - i j")]
    Label(char),
    #[error("bad seed in `{0}`")]
    Seed(String),
    #[error(transparent)]
    State(#[from] StateError),
}

fn single(c: char) -> Result<StateVector, InputError> {
    let mut s = StateVector::zero(1)?;
    match c {
        '0' => {}
        '1' => s.x(0),
        '+' => s.h(0),
        '-' => {
            s.x(0);
            s.h(0);
        }
        'i' => {
            s.h(0);
            s.s(0);
        }
        'j' => {
            s.x(0);
            s.h(0);
            s.s(0);
        }
        other => return Err(InputError::Label(other)),
    }
    Ok(s)
}

pub fn parse_input(label: &str, n: usize) -> Result<StateVector, InputError> {
    if label == "bell" {
        let mut s = StateVector::zero(2 * n)?;
        for k in 0..n {
            s.h(k);
            s.cnot(k, n + k);
        }
        return Ok(s);
    }
    if let Some(seed) = label.strip_prefix("random:") {
        let seed: u64 = seed.parse().map_err(|_| InputError::Seed(label.to_string()))?;
        return Ok(StateVector::random(n + 1, &mut SplitRng::new(seed))?);
    }
    let chars: Vec<char> = label.chars().collect();
    if chars.len() != n {
        return Err(InputError::Width { label: label.to_string(), got: chars.len(), want: n });
    }
    let mut s = StateVector::zero(0)?;
    for c in chars {
        s = s.tensor(&single(c)?)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use plmforge_core::statevec::fidelity;

    #[test]
    fn labels_give_expected_states() {
        let plus = parse_input("+", 1).unwrap();
        let mut x = plus.clone();
        x.x(0);
        assert!((fidelity(&plus, &x) - 1.0).abs() < 1e-12);
        let i = parse_input("i", 1).unwrap();
        let j = parse_input("j", 1).unwrap();
        assert!(fidelity(&i, &j) < 1e-12);
        let s = parse_input("10", 2).unwrap();
        assert!((s.amplitude(0b10).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bell_and_random_carry_a_reference() {
        assert_eq!(parse_input("bell", 2).unwrap().num_qubits(), 4);
        assert_eq!(parse_input("random:7", 1).unwrap().num_qubits(), 2);
        assert_eq!(parse_input("random:7", 1).unwrap(), parse_input("random:7", 1).unwrap());
    }

    #[test]
    fn bad_labels_are_rejected() {
        assert!(matches!(parse_input("0", 2), Err(InputError::Width { .. })));
        assert!(matches!(parse_input("x", 1), Err(InputError::Label('x'))));
        assert!(matches!(parse_input("random:z", 1), Err(InputError::Seed(_))));
    }
}
