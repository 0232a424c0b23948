import 'leaflet/dist/leaflet.css';
import './style.css';
import { ApiClient, ApiError } from './api';
import { DESCRIPTOR_PRESETS, readForm } from './form';
import { LeafletRenderer } from './map';
import { errorHtml, explanationHtml, loadingHtml, noRatingHtml } from './popup';
import { TileStore, type TileView } from './tiles';

const api = new ApiClient('');

let sessionId: string | null = null;
let tileBudget = 0;
let covered = 0;
let streaming = false;

const mapEl = document.getElementById('map') as HTMLElement;
const statusEl = document.getElementById('status') as HTMLElement;
const startBtn = document.getElementById('start') as HTMLButtonElement;
const expandBtn = document.getElementById('expand') as HTMLButtonElement;
const exportLink = document.getElementById('export') as HTMLAnchorElement;
const presetsEl = document.getElementById('presets') as HTMLDataListElement;

for (const preset of DESCRIPTOR_PRESETS) {
  const option = document.createElement('option');
  option.value = preset;
  presetsEl.appendChild(option);
}

const renderer = new LeafletRenderer(mapEl, (view) => void onTileClick(view));
const store = new TileStore(renderer);
renderer.map.setView([60.17, 24.94], 13);

function setStatus(text: string, isError = false): void {
  statusEl.textContent = text;
  statusEl.classList.toggle('error', isError);
}

function refreshControls(): void {
  const exhausted = covered >= tileBudget;
  expandBtn.disabled = !sessionId || streaming || exhausted;
  expandBtn.textContent = exhausted ? 'Tile budget exhausted' : 'Expand coverage';
  startBtn.disabled = streaming;
  if (sessionId) {
    exportLink.href = api.exportUrl(sessionId);
    exportLink.classList.remove('hidden');
  }
}

async function streamTo(count: number): Promise<void> {
  if (!sessionId) return;
  streaming = true;
  refreshControls();
  let finals = 0;
  try {
    for await (const msg of api.streamTiles(sessionId, count)) {
      if (msg.type === 'tile') {
        store.apply(msg);
        if (msg.phase === 'final') {
          finals += 1;
          setStatus(`Rated ${finals}/${count} squares…`);
        }
      }
    }
    covered = Math.max(covered, count);
    setStatus(`Showing ${store.size} squares.`);
  } catch (error) {
    setStatus(`Tile stream failed: ${error instanceof Error ? error.message : error}`, true);
  } finally {
    streaming = false;
    refreshControls();
  }
}

startBtn.addEventListener('click', () => {
  void (async () => {
    const values = readForm(document);
    if (typeof values === 'string') {
      setStatus(values, true);
      return;
    }
    try {
      const session = await api.startSession({
        persona: values.persona,
        origin: { lat: values.lat, lon: values.lon },
      });
      sessionId = session.session_id;
      tileBudget = session.tile_budget;
      covered = 0;
      store.reset();
      renderer.setOrigin({ lat: values.lat, lon: values.lon });
      setStatus('Session started; streaming tiles…');
      await streamTo(Math.min(values.count, tileBudget));
    } catch (error) {
      if (error instanceof ApiError) {
        setStatus(`Could not start: ${error.message}`, true);
      } else {
        throw error;
      }
    }
  })();
});

expandBtn.addEventListener('click', () => {
  // Each expansion adds the next Chebyshev ring around what is shown.
  const side = Math.round(Math.sqrt(covered)) + 2;
  void streamTo(Math.min(side * side, tileBudget));
});

async function onTileClick(view: TileView): Promise<void> {
  const anchor = { lat: view.corners[2].lat, lon: (view.corners[0].lon + view.corners[2].lon) / 2 };
  if (view.status !== 'rated') {
    renderer.openPopup(anchor, noRatingHtml(view));
    return;
  }
  if (!sessionId) return;
  renderer.openPopup(anchor, loadingHtml(view));
  try {
    const explanation = await api.explain(sessionId, view.i, view.j);
    renderer.openPopup(anchor, explanationHtml(view, explanation));
  } catch (error) {
    const message = error instanceof Error ? error.message : String(error);
    renderer.openPopup(anchor, errorHtml(view, message));
    document
      .querySelector(`[data-retry="${view.key}"]`)
      ?.addEventListener('click', () => void onTileClick(view));
  }
}

refreshControls();
setStatus('Set a persona and location, then start rating.');
