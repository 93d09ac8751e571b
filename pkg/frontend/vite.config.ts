import { defineConfig } from "vitest/config";

// Dev mode proxies the data endpoints to a locally running rating service
// (t2vqa serve listens on 8765 by default). A production build is served
// by the service itself via its --ui flag, so no proxy is involved there.
export default defineConfig({
  server: {
    proxy: {
      "/api": { target: "http://localhost:8765", changeOrigin: true },
      "/frames": { target: "http://localhost:8765", changeOrigin: true },
    },
  },
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
