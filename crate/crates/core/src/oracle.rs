//! Brute-force ground truth by full assignment enumeration.
//!
//! Deliberately naive: no propagation, no pruning, nothing shared with the
//! resolution engine beyond the instance types.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CspInstance, Nogood, Value};

pub const DEFAULT_CAP: u128 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SatStatus {
    Sat,
    Unsat,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleResult {
    pub status: SatStatus,
    /// First model in enumeration order, when one exists.
    pub witness: Option<Vec<Value>>,
    pub model_count: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("search space of {size} assignments exceeds the cap of {cap}")]
    CapExceeded { size: u128, cap: u128 },
}

fn space_size(inst: &CspInstance) -> u128 {
    inst.domains()
        .iter()
        .map(|d| d.len() as u128)
        .try_fold(1u128, |acc, n| acc.checked_mul(n))
        .unwrap_or(u128::MAX)
}

/// Visits every complete assignment in mixed-radix order (last variable
/// fastest). Stops early when `visit` returns false.
fn for_each_assignment(
    inst: &CspInstance,
    cap: u128,
    mut visit: impl FnMut(&[Value]) -> bool,
) -> Result<(), OracleError> {
    let size = space_size(inst);
    if size > cap {
        return Err(OracleError::CapExceeded { size, cap });
    }
    if size == 0 {
        return Ok(());
    }
    let domains = inst.domains();
    let mut digits = vec![0usize; domains.len()];
    let mut values: Vec<Value> = domains.iter().map(|d| d[0]).collect();
    loop {
        if !visit(&values) {
            return Ok(());
        }
        let mut i = domains.len();
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < domains[i].len() {
                values[i] = domains[i][digits[i]];
                break;
            }
            digits[i] = 0;
            values[i] = domains[i][0];
        }
    }
}

fn is_model(inst: &CspInstance, values: &[Value]) -> bool {
    inst.nogoods().iter().all(|n| !n.violated_by(values))
}

pub fn brute_force_solve(inst: &CspInstance) -> Result<OracleResult, OracleError> {
    brute_force_solve_capped(inst, DEFAULT_CAP)
}

pub fn brute_force_solve_capped(inst: &CspInstance, cap: u128) -> Result<OracleResult, OracleError> {
    let mut witness = None;
    let mut model_count = 0u64;
    for_each_assignment(inst, cap, |values| {
        if is_model(inst, values) {
            model_count += 1;
            if witness.is_none() {
                witness = Some(values.to_vec());
            }
        }
        true
    })?;
    Ok(OracleResult {
        status: if model_count > 0 {
            SatStatus::Sat
        } else {
            SatStatus::Unsat
        },
        witness,
        model_count,
    })
}

/// True iff every model of `inst` satisfies `n`.
pub fn entails(inst: &CspInstance, n: &Nogood) -> Result<bool, OracleError> {
    entails_capped(inst, n, DEFAULT_CAP)
}

pub fn entails_capped(inst: &CspInstance, n: &Nogood, cap: u128) -> Result<bool, OracleError> {
    let mut holds = true;
    for_each_assignment(inst, cap, |values| {
        if is_model(inst, values) && n.violated_by(values) {
            holds = false;
        }
        holds
    })?;
    Ok(holds)
}
