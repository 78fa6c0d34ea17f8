import { defineConfig } from "vitest/config";

// Integration specs spawn the python server; run files one at a time so
// ports and child processes never collide.
export default defineConfig({
  test: {
    pool: "forks",
    poolOptions: { forks: { singleFork: true } },
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
