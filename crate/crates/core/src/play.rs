//! Opponent interfaces shared by the simulation loops.

/// Supplies the opponent's pure action each stage.
///
/// `observe` is called after every stage with the public history entry, so
/// adaptive opponents can only use the past.
pub trait ActionSource {
    fn next_action(&mut self, stage: u64) -> usize;

    fn observe(&mut self, _own: usize, _other: usize) {}
}

impl<F: FnMut(u64) -> usize> ActionSource for F {
    fn next_action(&mut self, stage: u64) -> usize {
        self(stage)
    }
}

/// Cycles through a fixed sequence of actions.
#[derive(Clone, Debug)]
pub struct Periodic(pub Vec<usize>);

impl ActionSource for Periodic {
    fn next_action(&mut self, stage: u64) -> usize {
        self.0[((stage - 1) % self.0.len() as u64) as usize]
    }
}

/// Always plays the same action.
#[derive(Clone, Copy, Debug)]
pub struct Constant(pub usize);

impl ActionSource for Constant {
    fn next_action(&mut self, _stage: u64) -> usize {
        self.0
    }
}
