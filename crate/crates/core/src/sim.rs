//! Movement followed by the perturbation policy, one slot at a time.

use crate::error::Result;
use crate::perturb::{policy_step, PerturbationRecord};
use crate::ring::{new_state, step, InitSpec, ModelParams, MoveRecord, Policy, RingState};
use crate::rng::CounterRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    /// Time at the start of the slot.
    pub slot: u64,
    /// Movement tallies; `perturb_distance` is filled from the relocation.
    pub moves: MoveRecord,
    pub perturbation: Option<PerturbationRecord>,
}

/// A trajectory under fixed parameters.
#[derive(Debug, Clone)]
pub struct Simulation {
    params: ModelParams,
    rng: CounterRng,
    state: RingState,
}

impl Simulation {
    pub fn new(params: &ModelParams, init: &InitSpec) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params: params.clone(),
            rng: CounterRng::new(params.seed),
            state: new_state(params, init)?,
        })
    }

    /// Continue from an existing state.
    pub fn from_state(params: &ModelParams, state: RingState) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params: params.clone(),
            rng: CounterRng::new(params.seed),
            state,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn state(&self) -> &RingState {
        &self.state
    }

    pub fn into_state(self) -> RingState {
        self.state
    }

    /// One slot: movement, ideal-state check, policy draw.
    pub fn advance(&mut self) -> Result<SlotOutcome> {
        let slot = self.state.t();
        let mut moves = step(&mut self.state, &self.params, &self.rng);
        let perturbation = match self.params.policy {
            Policy::None => None,
            Policy::Absorbing => {
                let ideal = self.state.is_ideal();
                policy_step(&mut self.state, &self.params, &self.rng, ideal)?
            }
            Policy::Independent => policy_step(&mut self.state, &self.params, &self.rng, false)?,
        };
        if let Some(p) = &perturbation {
            moves.perturb_distance = p.right_distance as u32;
        }
        Ok(SlotOutcome {
            slot,
            moves,
            perturbation,
        })
    }

    /// Advance `slots` slots, handing each outcome and the resulting state
    /// to `observe`.
    pub fn run(
        &mut self,
        slots: u64,
        mut observe: impl FnMut(&SlotOutcome, &RingState),
    ) -> Result<()> {
        for _ in 0..slots {
            let out = self.advance()?;
            observe(&out, &self.state);
        }
        Ok(())
    }

    /// Advance without observation.
    pub fn skip(&mut self, slots: u64) -> Result<()> {
        if self.params.policy == Policy::None {
            for _ in 0..slots {
                step(&mut self.state, &self.params, &self.rng);
            }
            return Ok(());
        }
        for _ in 0..slots {
            self.advance()?;
        }
        Ok(())
    }
}
