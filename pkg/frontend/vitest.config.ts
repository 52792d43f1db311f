import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // The round-trip test boots a real annotation server and a tiny corpus.
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
