import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    environment: "node",
    testTimeout: 30_000,
    hookTimeout: 60_000,
    // the integration file boots one service per worker; keep workers at 1 so
    // unit and service tests don't race for the port space
    maxWorkers: 1,
    minWorkers: 1,
  },
});
