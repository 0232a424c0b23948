import type { TileView } from './tiles';
import type { ExplanationMsg } from './types';

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

/** Popup body for a clicked square, before the explanation arrives. */
export function loadingHtml(view: TileView): string {
  return `<div class="popup"><strong>Square (${view.i}, ${view.j})</strong><p>Loading explanation…</p></div>`;
}

/** Popup body for a square with no rating: status notice, no explanation. */
export function noRatingHtml(view: TileView): string {
  const note = view.detail ? `<p class="detail">${escapeHtml(view.detail)}</p>` : '';
  return (
    `<div class="popup"><strong>Square (${view.i}, ${view.j})</strong>` +
    `<p>No rating (${escapeHtml(view.status)}).</p>${note}</div>`
  );
}

/** Popup body with the rating, explanation text, and corpus freshness. */
export function explanationHtml(view: TileView, explanation: ExplanationMsg): string {
  const bullets = explanation.text
    .split('\n')
    .map((line) => line.replace(/^- /, '').trim())
    .filter(Boolean)
    .map((line) => `<li>${escapeHtml(line)}</li>`)
    .join('');
  const freshness = explanation.corpus_fetched_at
    ? `<p class="freshness">Safety corpus fetched ${escapeHtml(explanation.corpus_fetched_at)}</p>`
    : '';
  return (
    `<div class="popup"><strong>Square (${view.i}, ${view.j}) — rating ${explanation.rating}</strong>` +
    `<ul>${bullets}</ul>${freshness}</div>`
  );
}

/** Popup body for a failed explanation fetch, with a retry affordance. */
export function errorHtml(view: TileView, message: string): string {
  return (
    `<div class="popup"><strong>Square (${view.i}, ${view.j})</strong>` +
    `<p>Could not load the explanation: ${escapeHtml(message)}</p>` +
    `<button data-retry="${view.key}">Retry</button></div>`
  );
}
