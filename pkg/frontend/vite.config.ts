import { defineConfig } from 'vitest/config';

export default defineConfig({
  server: {
    // Dev server proxies API calls to a locally running rating service.
    proxy: {
      '/api': 'http://127.0.0.1:8000',
      '/healthz': 'http://127.0.0.1:8000',
    },
  },
  test: {
    environment: 'jsdom',
  },
});
