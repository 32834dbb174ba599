//! Optimal one-way LOCC certification protocols and their Schmidt-number witnesses.

pub mod assemble;
pub mod extract;
pub mod policy;
pub mod witness;

pub use assemble::{
    assemble, assemble_program, assemble_reduced, witness_program, AssembledProgram, HermitianVar, PolicyBlocks,
    ProgramForm, VariableLayout, WitnessPart,
};
pub use extract::{
    certify_policy, extract_protocol, extract_protocol_with, synthesize, ProtocolCertificate, SolverDiagnostics,
};
pub use policy::{effective_povm, LoccPolicy, Outcome, PolicyEntry, ProductOperators};
pub use witness::{
    randomized_witness_oracle, round_witness, seesaw_max_overlap, solve_witness, verify_witness, verify_witness_with,
    witness_residual, OracleReport, ReducedWitness, WitnessReport, WitnessStatus,
};
