import { ApiClient } from './api.js';
import { Studio } from './app.js';

const SERVICE_URL =
  new URLSearchParams(window.location.search).get('service') ?? 'http://127.0.0.1:8080';

const root = document.getElementById('app');
if (!root) throw new Error('missing #app mount point');

Studio.boot(root, new ApiClient(SERVICE_URL)).catch((error) => {
  root.innerHTML = `<p class="boot-error">service unreachable at ${SERVICE_URL}: ${String(error)}</p>`;
});
