pub mod credentials;
pub mod lock;
pub mod services;
