// Acceptance suite; filled in as modules land.
