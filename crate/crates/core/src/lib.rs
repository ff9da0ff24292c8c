//! Safe following distances under the responsibility-sensitive safety model,
//! extended with the mid-braking collision case, plus the road physics,
//! simulation oracle and micro-ODD machinery built on top of it.

pub mod cli;
pub mod kinematics;
pub mod odd;
pub mod oracle;
pub mod physics;
pub mod units;
pub mod verify;
