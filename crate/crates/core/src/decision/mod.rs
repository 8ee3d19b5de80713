//! Learned local controller: a multimodal recurrent convolutional network
//! that maps egocentric observations plus a navigation intention to
//! velocity commands, trained by imitation with truncated backpropagation
//! through time.

pub mod cell;
pub mod dataset;
pub mod net;
pub mod tape;
pub mod tensor;
pub mod train;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DecisionError {
    #[error("checkpoint is malformed: {0}")]
    BadCheckpoint(String),
    #[error("dataset is malformed: {0}")]
    BadDataset(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Control modes with a dedicated memory cell. `Stop` has no cell: it is an
/// output override that forces zero velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ControlMode {
    GoForward,
    TurnLeft,
    TurnRight,
    TakeElevator,
}

impl ControlMode {
    pub const ALL: [ControlMode; 4] = [
        ControlMode::GoForward,
        ControlMode::TurnLeft,
        ControlMode::TurnRight,
        ControlMode::TakeElevator,
    ];

    pub fn index(self) -> usize {
        match self {
            ControlMode::GoForward => 0,
            ControlMode::TurnLeft => 1,
            ControlMode::TurnRight => 2,
            ControlMode::TakeElevator => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<ControlMode> {
        ControlMode::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ControlMode::GoForward => "go_forward",
            ControlMode::TurnLeft => "turn_left",
            ControlMode::TurnRight => "turn_right",
            ControlMode::TakeElevator => "take_elevator",
        }
    }
}

/// Instantaneous command that conditions the controller. `Stop` bypasses the
/// network entirely; the remaining walking intentions reuse `GoForward`'s
/// memory because they demand the same local behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandIntention {
    GoForward,
    TurnLeft,
    TurnRight,
    TakeElevator,
    Upstairs,
    Linkway,
    Stop,
}

impl CommandIntention {
    /// The memory cell (and output head) driven by this intention, or `None`
    /// for `Stop`.
    pub fn control_mode(self) -> Option<ControlMode> {
        match self {
            CommandIntention::GoForward
            | CommandIntention::Upstairs
            | CommandIntention::Linkway => Some(ControlMode::GoForward),
            CommandIntention::TurnLeft => Some(ControlMode::TurnLeft),
            CommandIntention::TurnRight => Some(ControlMode::TurnRight),
            CommandIntention::TakeElevator => Some(ControlMode::TakeElevator),
            CommandIntention::Stop => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            CommandIntention::GoForward => 0,
            CommandIntention::TurnLeft => 1,
            CommandIntention::TurnRight => 2,
            CommandIntention::TakeElevator => 3,
            CommandIntention::Upstairs => 4,
            CommandIntention::Linkway => 5,
            CommandIntention::Stop => 6,
        }
    }

    pub fn from_code(c: u8) -> Option<CommandIntention> {
        Some(match c {
            0 => CommandIntention::GoForward,
            1 => CommandIntention::TurnLeft,
            2 => CommandIntention::TurnRight,
            3 => CommandIntention::TakeElevator,
            4 => CommandIntention::Upstairs,
            5 => CommandIntention::Linkway,
            6 => CommandIntention::Stop,
            _ => return None,
        })
    }
}

/// Linear and angular velocity command.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VelocityCommand {
    pub linear: f64,
    pub angular: f64,
}

impl VelocityCommand {
    pub const STOP: VelocityCommand = VelocityCommand {
        linear: 0.0,
        angular: 0.0,
    };
}
