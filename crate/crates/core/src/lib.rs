pub mod agents;
pub mod bench;
pub mod condition;
pub mod device;
pub mod eval;
pub mod fsm;
pub mod verdict;
pub mod gateway;
pub mod perception;
pub mod simenv;

#[cfg(test)]
mod testutil;
