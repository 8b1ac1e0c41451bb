import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // The integration suite spawns the Python server and replays a fixture.
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
