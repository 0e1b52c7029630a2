pub mod hashing;
pub mod kernel;
pub mod corpus;
pub mod policy;
pub mod search;
pub mod scoring;
pub mod pairing;
pub mod dpo;
pub mod pipeline;
